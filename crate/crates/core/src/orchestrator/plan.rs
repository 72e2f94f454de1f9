use serde::{Deserialize, Serialize};

use super::config::{BatchKind, ConfigError, MasterConfig, Mode};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedBatch {
    pub kind: BatchKind,
    pub items: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartupPlan {
    pub batches: Vec<PlannedBatch>,
    pub warnings: Vec<String>,
}

impl StartupPlan {
    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

/// Orders startup as configured. FORBID entries, MANUAL services and
/// disabled services are dropped with a warning; batches left empty vanish.
/// Services missing from the sequence are not started automatically.
pub fn plan_startup(cfg: &MasterConfig) -> Result<StartupPlan, ConfigError> {
    let mut plan = StartupPlan::default();

    for (n, batch) in cfg.startup_sequence.iter().enumerate() {
        let mut items = Vec::with_capacity(batch.items.len());
        for name in &batch.items {
            let unknown = || ConfigError::UnknownName {
                context: format!("startup batch {}", n + 1),
                name: name.clone(),
            };
            let (mode, enabled) = match batch.kind {
                BatchKind::Command => (cfg.command(name).ok_or_else(unknown)?.mode, true),
                BatchKind::Service => {
                    let s = cfg.service(name).ok_or_else(unknown)?;
                    (s.mode, s.enabled)
                }
            };
            match mode {
                Mode::Forbid => plan
                    .warnings
                    .push(format!("skipping forbidden `{name}` in batch {}", n + 1)),
                Mode::Manual if batch.kind == BatchKind::Service => plan.warnings.push(format!(
                    "skipping manual service `{name}` in batch {}",
                    n + 1
                )),
                _ if !enabled => plan.warnings.push(format!(
                    "skipping disabled service `{name}` in batch {}",
                    n + 1
                )),
                _ => items.push(name.clone()),
            }
        }
        if !items.is_empty() {
            plan.batches.push(PlannedBatch {
                kind: batch.kind,
                items,
            });
        }
    }

    Ok(plan)
}
