//! Report timing on a logical clock. Times are whole seconds.

use serde::{Deserialize, Serialize};

use super::EndpointConfig;

/// Emission `k` happens at `t0 + k * interval`, computed directly so there
/// is no accumulated drift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportSchedule {
    pub t0: u64,
    pub interval: u64,
}

impl ReportSchedule {
    pub fn new(cfg: &EndpointConfig, t0: u64) -> Self {
        Self {
            t0,
            interval: cfg.report_interval,
        }
    }

    pub fn emission(&self, k: u64) -> u64 {
        self.t0 + k * self.interval
    }

    /// Emissions in `[start, end)`.
    pub fn emissions_in(&self, start: u64, end: u64) -> impl Iterator<Item = u64> + '_ {
        let first = if start <= self.t0 {
            0
        } else {
            (start - self.t0).div_ceil(self.interval)
        };
        (first..)
            .map(move |k| self.emission(k))
            .take_while(move |&t| t < end)
    }
}

/// When the client next tries to reconnect after dropping at
/// `disconnect_at`. `None` when AutoReconnect is off.
pub fn reconnect_attempt(cfg: &EndpointConfig, disconnect_at: u64) -> Option<u64> {
    cfg.auto_reconnect
        .then(|| disconnect_at + cfg.reconnect_interval)
}

/// The link is down over `[down_at, up_at)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outage {
    pub down_at: u64,
    pub up_at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Report { t: u64 },
    MissedReport { t: u64 },
    Disconnected { t: u64 },
    ReconnectAttempt { t: u64, success: bool },
}

/// Plays a client session over `[t0, end)`. Reports fire on schedule while
/// connected and are missed while not. After each outage starts the client
/// retries every ReconnectInterval until an attempt lands after the link is
/// back. Without AutoReconnect the session stays down.
pub fn simulate_session(
    cfg: &EndpointConfig,
    t0: u64,
    end: u64,
    outages: &[Outage],
) -> Vec<SessionEvent> {
    let mut outages: Vec<Outage> = outages
        .iter()
        .copied()
        .filter(|o| o.up_at > o.down_at)
        .collect();
    outages.sort_by_key(|o| o.down_at);

    // Connection-loss intervals as the client sees them: from the drop to the
    // first successful reconnect.
    let mut events = Vec::new();
    let mut offline: Vec<(u64, u64)> = Vec::new();
    let mut resumed = t0;
    for o in outages {
        if o.down_at < resumed || o.down_at >= end {
            continue;
        }
        events.push(SessionEvent::Disconnected { t: o.down_at });
        let mut back = u64::MAX;
        let mut at = o.down_at;
        while let Some(next) = reconnect_attempt(cfg, at) {
            if next >= end {
                break;
            }
            let success = next >= o.up_at;
            events.push(SessionEvent::ReconnectAttempt { t: next, success });
            at = next;
            if success {
                back = next;
                break;
            }
        }
        offline.push((o.down_at, back));
        resumed = back;
        if back == u64::MAX {
            break;
        }
    }

    let sched = ReportSchedule::new(cfg, t0);
    for t in sched.emissions_in(t0, end) {
        if offline.iter().any(|&(a, b)| t >= a && t < b) {
            events.push(SessionEvent::MissedReport { t });
        } else {
            events.push(SessionEvent::Report { t });
        }
    }
    events.sort_by_key(|e| match e {
        SessionEvent::Disconnected { t } => (*t, 0),
        SessionEvent::ReconnectAttempt { t, .. } => (*t, 1),
        SessionEvent::Report { t } | SessionEvent::MissedReport { t } => (*t, 2),
    });
    events
}
