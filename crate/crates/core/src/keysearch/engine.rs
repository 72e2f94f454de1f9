use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::detector::{PlaintextDetector, Verdict};
use super::families::{Candidate, CandidateFamily, FamilyParams};
use super::KeySearchError;
use crate::cipher::{SubkeySchedule, BLOCK_SIZE};
use crate::container::{self, HEADER_LEN};
use crate::lcg::DeviceIdentity;

const BATCH: usize = 256;
/// Key schedules expanded side by side by one worker.
const LANES: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub families: Vec<CandidateFamily>,
    /// Cap on candidates tested in this phase. `None` walks every family to the end.
    pub budget: Option<u64>,
    pub workers: usize,
    /// Suffix lengths for this phase, overriding the plan-wide parameters.
    #[serde(default)]
    pub suffix_lengths: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub phases: Vec<Phase>,
    #[serde(default)]
    pub params: FamilyParams,
}

impl AttackPlan {
    /// Patterns first, then short suffixes, then long suffixes. The last
    /// phase is capped because the full 6-character space is out of desk reach.
    pub fn progressive(workers: usize) -> Self {
        use CandidateFamily::*;
        Self {
            phases: vec![
                Phase {
                    name: "pattern".into(),
                    families: vec![
                        DeviceCodeVariations,
                        DigestCombinations,
                        LcgSeeded,
                        HardwareCombos,
                        TimestampKeys,
                    ],
                    budget: None,
                    workers,
                    suffix_lengths: None,
                },
                Phase {
                    name: "suffix_short".into(),
                    families: vec![SuffixBruteForce],
                    budget: None,
                    workers,
                    suffix_lengths: Some((1, 3)),
                },
                Phase {
                    name: "suffix_long".into(),
                    families: vec![SuffixBruteForce],
                    budget: Some(10_000_000),
                    workers,
                    suffix_lengths: Some((4, 6)),
                },
            ],
            params: FamilyParams::default(),
        }
    }

    /// One phase over a single family.
    pub fn single(family: CandidateFamily, budget: Option<u64>, workers: usize) -> Self {
        Self {
            phases: vec![Phase {
                name: family.name().into(),
                families: vec![family],
                budget,
                workers,
                suffix_lengths: None,
            }],
            params: FamilyParams::default(),
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        for p in &mut self.phases {
            p.workers = workers;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Found {
        /// Hex-encoded 16-byte key.
        key: String,
        /// 1-based phase number.
        phase: usize,
        phase_name: String,
        family: CandidateFamily,
        /// 0-based position in the phase's candidate stream.
        candidate_index: u64,
    },
    Exhausted {
        total_tested: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub name: String,
    pub tested: u64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub outcome: Outcome,
    /// Candidates actually run through the detector. After a hit, workers may
    /// have tested a few candidates past the winner, so these are upper bounds.
    pub tested_per_family: BTreeMap<CandidateFamily, u64>,
    pub total_tested: u64,
    pub weak_accepts: u64,
    pub phases: Vec<PhaseSummary>,
    pub elapsed_secs: f64,
}

impl SearchReport {
    pub fn found_key(&self) -> Option<[u8; 16]> {
        match &self.outcome {
            Outcome::Found { key, .. } => hex::decode(key).ok()?.try_into().ok(),
            Outcome::Exhausted { .. } => None,
        }
    }

    pub fn keys_per_sec(&self) -> f64 {
        if self.elapsed_secs > 0.0 {
            self.total_tested as f64 / self.elapsed_secs
        } else {
            0.0
        }
    }
}

struct Dispenser {
    streams: Vec<(CandidateFamily, Box<dyn Iterator<Item = Candidate> + Send>)>,
    current: usize,
    next_index: u64,
    limit: u64,
}

impl Dispenser {
    fn fill(&mut self, out: &mut Vec<(u64, CandidateFamily, Candidate)>, stop_after: u64) {
        out.clear();
        while out.len() < BATCH && self.next_index < self.limit && self.next_index <= stop_after {
            let Some((family, stream)) = self.streams.get_mut(self.current) else {
                return;
            };
            match stream.next() {
                Some(key) => {
                    out.push((self.next_index, *family, key));
                    self.next_index += 1;
                }
                None => self.current += 1,
            }
        }
    }
}

#[derive(Default)]
struct Tally {
    tested: BTreeMap<CandidateFamily, u64>,
    weak: u64,
    hits: Vec<(u64, CandidateFamily, Candidate)>,
}

impl Tally {
    fn merge(&mut self, other: Tally) {
        for (f, n) in other.tested {
            *self.tested.entry(f).or_default() += n;
        }
        self.weak += other.weak;
        self.hits.extend(other.hits);
    }
}

fn run_phase(
    payload: &[u8],
    dispenser: Dispenser,
    workers: usize,
    det: &PlaintextDetector,
) -> Tally {
    let dispenser = Mutex::new(dispenser);
    let best = AtomicU64::new(u64::MAX);
    let total = Mutex::new(Tally::default());

    let work = || {
        let mut lanes: Box<[SubkeySchedule; LANES]> =
            Box::new(std::array::from_fn(|_| SubkeySchedule::expand(&[0u8; 16])));
        let mut batch = Vec::with_capacity(BATCH);
        let mut local = Tally::default();
        loop {
            dispenser
                .lock()
                .expect("dispenser poisoned")
                .fill(&mut batch, best.load(Ordering::Relaxed));
            if batch.is_empty() {
                break;
            }
            let mut counts = [0u64; CandidateFamily::ALL.len()];
            for group in batch.chunks(LANES) {
                if group[0].0 > best.load(Ordering::Relaxed) {
                    break;
                }
                // A short final group repeats its last key to fill the lanes.
                let keys: [&[u8]; LANES] =
                    std::array::from_fn(|k| &group[k.min(group.len() - 1)].2[..]);
                SubkeySchedule::rekey_lanes(&mut lanes, &keys);
                for (sched, &(index, family, key)) in lanes.iter().zip(group) {
                    if index > best.load(Ordering::Relaxed) {
                        break;
                    }
                    counts[family as usize] += 1;
                    match det.classify(sched, payload) {
                        Verdict::Reject => {}
                        Verdict::WeakAccept => local.weak += 1,
                        Verdict::Confirm => {
                            best.fetch_min(index, Ordering::Relaxed);
                            local.hits.push((index, family, key));
                        }
                    }
                }
            }
            for family in CandidateFamily::ALL {
                if counts[family as usize] > 0 {
                    *local.tested.entry(family).or_default() += counts[family as usize];
                }
            }
        }
        total.lock().expect("tally poisoned").merge(local);
    };

    std::thread::scope(|s| {
        for _ in 1..workers.max(1) {
            s.spawn(work);
        }
        work();
    });
    total.into_inner().expect("tally poisoned")
}

/// Runs the phases in order and stops at the first phase with a confirmed
/// key. Within a phase the lowest confirming candidate index wins, whatever
/// the worker count or scheduling.
pub fn run_attack(
    file: &[u8],
    id: &DeviceIdentity,
    plan: &AttackPlan,
    det: &PlaintextDetector,
) -> Result<SearchReport, KeySearchError> {
    if plan.phases.is_empty() {
        return Err(KeySearchError::EmptyPlan);
    }
    if !container::detect(file) {
        return Err(KeySearchError::NotFmx);
    }
    let payload = &file[HEADER_LEN.min(file.len())..];
    if payload.len() < BLOCK_SIZE {
        return Err(KeySearchError::PayloadTooShort(payload.len()));
    }

    // Build every stream before starting so that parameter errors surface
    // before any work is done.
    let mut dispensers = Vec::with_capacity(plan.phases.len());
    for phase in &plan.phases {
        let mut params = plan.params.clone();
        if let Some((lo, hi)) = phase.suffix_lengths {
            params.suffix_min_len = lo;
            params.suffix_max_len = hi;
        }
        let streams = phase
            .families
            .iter()
            .map(|&f| Ok((f, f.candidates(id, &params)?)))
            .collect::<Result<Vec<_>, KeySearchError>>()?;
        dispensers.push(Dispenser {
            streams,
            current: 0,
            next_index: 0,
            limit: phase.budget.unwrap_or(u64::MAX),
        });
    }

    let started = Instant::now();
    let mut tally = Tally::default();
    let mut summaries = Vec::new();
    let mut total_tested = 0;
    let mut outcome = None;

    for (n, (phase, dispenser)) in plan.phases.iter().zip(dispensers).enumerate() {
        let phase_start = Instant::now();
        let result = run_phase(payload, dispenser, phase.workers, det);
        let tested: u64 = result.tested.values().sum();
        total_tested += tested;
        summaries.push(PhaseSummary {
            name: phase.name.clone(),
            tested,
            elapsed_secs: phase_start.elapsed().as_secs_f64(),
        });
        let winner = result.hits.iter().min_by_key(|h| h.0).copied();
        tally.merge(result);
        if let Some((index, family, key)) = winner {
            outcome = Some(Outcome::Found {
                key: hex::encode(key),
                phase: n + 1,
                phase_name: phase.name.clone(),
                family,
                candidate_index: index,
            });
            break;
        }
    }

    Ok(SearchReport {
        outcome: outcome.unwrap_or(Outcome::Exhausted { total_tested }),
        tested_per_family: tally.tested,
        total_tested,
        weak_accepts: tally.weak,
        phases: summaries,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}
