//! Simulation config files, in the same INI dialect as unit files.
//!
//! A config describes both boot variants at once: plain sections feed the
//! conventional run, `*Boosted` sections and the defer/isolate switches feed
//! the boosted one. `assemble` picks the right side.
//!
//! ```text
//! [Sim]
//! Workers=4
//! Seed=0
//! Completion=fasttv.service
//! RcuOverheadConventional=23.7     ; ms per unit launch, fractions allowed
//! RcuOverheadBoosted=3.1
//!
//! [KernelPhase]                    ; label = ms, serial
//! memory-init=370
//!
//! [KernelPhaseBoosted]             ; optional; falls back to [KernelPhase]
//! memory-init=110
//!
//! [InitTasks]                      ; label = ms [deferrable]
//! enable-logging=28 deferrable
//!
//! [TextParseTasks]                 ; charged only when unit files are
//! load-services=150                ; parsed from text (no cache / bb off)
//!
//! [BootstrapTasks]                 ; service-phase setup work
//! module-initcalls=428 deferrable
//! ```

use std::collections::BTreeSet;

use crate::graph::BBGroup;
use crate::sim::{
    DeferPolicy, InitTask, Micros, SimConfig, RCU_OVERHEAD_BOOSTED_US,
    RCU_OVERHEAD_CONVENTIONAL_US,
};
use crate::unit::UnitName;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

/// Milliseconds (possibly fractional) to integer microseconds.
fn ms_value_to_us(v: &str, line: usize) -> Result<Micros, ConfigError> {
    let ms: f64 = v
        .parse()
        .map_err(|_| err(line, format!("expected a duration in ms, got {v:?}")))?;
    if !(ms.is_finite() && ms >= 0.0) {
        return Err(err(line, format!("duration must be nonnegative, got {v:?}")));
    }
    Ok((ms * 1000.0).round() as Micros)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimConfigFile {
    pub workers: usize,
    pub seed: u64,
    pub completion: BTreeSet<UnitName>,
    pub rcu_overhead_conventional_us: Micros,
    pub rcu_overhead_boosted_us: Micros,
    pub kernel_phase: Vec<(String, Micros)>,
    pub kernel_phase_boosted: Option<Vec<(String, Micros)>>,
    pub init_tasks: Vec<InitTask>,
    pub text_parse_tasks: Vec<(String, Micros)>,
    pub bootstrap_tasks: Vec<InitTask>,
}

impl SimConfigFile {
    pub fn parse(text: &str) -> Result<SimConfigFile, ConfigError> {
        let mut cfg = SimConfigFile {
            workers: 4,
            seed: 0,
            rcu_overhead_conventional_us: RCU_OVERHEAD_CONVENTIONAL_US,
            rcu_overhead_boosted_us: RCU_OVERHEAD_BOOSTED_US,
            ..SimConfigFile::default()
        };
        let mut kernel_boosted: Vec<(String, Micros)> = Vec::new();
        let mut saw_kernel_boosted = false;

        #[derive(PartialEq, Clone, Copy)]
        enum Sect {
            Sim,
            Kernel,
            KernelBoosted,
            Init,
            TextParse,
            Bootstrap,
        }
        let mut section: Option<Sect> = None;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(lineno, format!("unterminated section {line:?}")))?;
                section = Some(match name {
                    "Sim" => Sect::Sim,
                    "KernelPhase" => Sect::Kernel,
                    "KernelPhaseBoosted" => {
                        saw_kernel_boosted = true;
                        Sect::KernelBoosted
                    }
                    "InitTasks" => Sect::Init,
                    "TextParseTasks" => Sect::TextParse,
                    "BootstrapTasks" => Sect::Bootstrap,
                    other => return Err(err(lineno, format!("unknown section [{other}]"))),
                });
                continue;
            }
            let sect =
                section.ok_or_else(|| err(lineno, format!("key outside any section: {line:?}")))?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(lineno, format!("expected key=value, got {line:?}")))?;
            let key = key.trim_end();
            let value = value.trim_start();

            let parse_task = |value: &str| -> Result<(Micros, bool), ConfigError> {
                let mut parts = value.split_whitespace();
                let ms = parts
                    .next()
                    .ok_or_else(|| err(lineno, "missing duration"))?;
                let dur = ms_value_to_us(ms, lineno)?;
                let deferrable = match parts.next() {
                    None => false,
                    Some("deferrable") => true,
                    Some(other) => {
                        return Err(err(lineno, format!("unexpected token {other:?}")))
                    }
                };
                if parts.next().is_some() {
                    return Err(err(lineno, "trailing tokens after task definition"));
                }
                Ok((dur, deferrable))
            };

            match sect {
                Sect::Sim => match key {
                    "Workers" => {
                        cfg.workers = value.parse().map_err(|_| {
                            err(lineno, format!("Workers must be a positive integer, got {value:?}"))
                        })?;
                        if cfg.workers == 0 {
                            return Err(err(lineno, "Workers must be at least 1"));
                        }
                    }
                    "Seed" => {
                        cfg.seed = value.parse().map_err(|_| {
                            err(lineno, format!("Seed must be an integer, got {value:?}"))
                        })?;
                    }
                    "Completion" => {
                        for t in value.split_whitespace() {
                            let name = UnitName::parse(t)
                                .map_err(|e| err(lineno, e.to_string()))?;
                            cfg.completion.insert(name);
                        }
                    }
                    "RcuOverheadConventional" => {
                        cfg.rcu_overhead_conventional_us = ms_value_to_us(value, lineno)?;
                    }
                    "RcuOverheadBoosted" => {
                        cfg.rcu_overhead_boosted_us = ms_value_to_us(value, lineno)?;
                    }
                    other => return Err(err(lineno, format!("unknown [Sim] key {other:?}"))),
                },
                Sect::Kernel => {
                    cfg.kernel_phase
                        .push((key.to_string(), ms_value_to_us(value, lineno)?));
                }
                Sect::KernelBoosted => {
                    kernel_boosted.push((key.to_string(), ms_value_to_us(value, lineno)?));
                }
                Sect::Init => {
                    let (dur, deferrable) = parse_task(value)?;
                    cfg.init_tasks.push(InitTask {
                        label: key.to_string(),
                        duration_us: dur,
                        deferrable,
                    });
                }
                Sect::TextParse => {
                    let (dur, deferrable) = parse_task(value)?;
                    if deferrable {
                        return Err(err(lineno, "text-parse tasks cannot be deferrable"));
                    }
                    cfg.text_parse_tasks.push((key.to_string(), dur));
                }
                Sect::Bootstrap => {
                    let (dur, deferrable) = parse_task(value)?;
                    cfg.bootstrap_tasks.push(InitTask {
                        label: key.to_string(),
                        duration_us: dur,
                        deferrable,
                    });
                }
            }
        }
        if saw_kernel_boosted {
            cfg.kernel_phase_boosted = Some(kernel_boosted);
        }
        Ok(cfg)
    }

    /// Build the effective simulation input for one variant.
    ///
    /// Boosted: the reduced kernel phase, deferral of everything outside the
    /// group, the boosted per-launch overhead, and no text-parse charge
    /// (units come pre-parsed). Conventional: the full kernel phase, no
    /// deferral or isolation, the conventional overhead, and the text-parse
    /// tasks charged up front.
    pub fn assemble(&self, boosted: bool, group: Option<BBGroup>) -> SimConfig {
        let mut init_tasks = self.init_tasks.clone();
        if !boosted {
            for (label, dur) in &self.text_parse_tasks {
                init_tasks.push(InitTask {
                    label: label.clone(),
                    duration_us: *dur,
                    deferrable: false,
                });
            }
        }
        init_tasks.extend(self.bootstrap_tasks.iter().cloned());

        SimConfig {
            workers: self.workers,
            kernel_phase: if boosted {
                self.kernel_phase_boosted
                    .clone()
                    .unwrap_or_else(|| self.kernel_phase.clone())
            } else {
                self.kernel_phase.clone()
            },
            init_tasks,
            defer_policy: if boosted {
                DeferPolicy::DeferAll
            } else {
                DeferPolicy::None
            },
            bb_group: if boosted { group } else { None },
            rcu_overhead_per_start_us: if boosted {
                self.rcu_overhead_boosted_us
            } else {
                self.rcu_overhead_conventional_us
            },
            seed: self.seed,
        }
    }
}
