//! Turn schedule traces into bootchart-style timelines, metric summaries,
//! and A/B comparison reports. Everything here is a pure function of its
//! inputs: identical traces produce byte-identical documents, so outputs are
//! golden-testable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::{Micros, ScheduleTrace};
use crate::unit::UnitName;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartFormat {
    Svg,
    Text,
}

#[derive(Debug, Clone, Copy)]
pub struct ChartOptions {
    /// Horizontal scale of the SVG: one pixel per this many ms. The default
    /// keeps an 8-second boot under 2000 px wide.
    pub svg_ms_per_px: u64,
    /// Horizontal scale of the text chart: one cell per this many ms.
    pub text_ms_per_cell: u64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            svg_ms_per_px: 5,
            text_ms_per_cell: 100,
        }
    }
}

/// Rows ordered by start time (name breaks ties). The solid span runs from
/// start to readiness, the light span from readiness to finish; group
/// members are marked.
pub fn emit_bootchart(trace: &ScheduleTrace, format: ChartFormat, opts: ChartOptions) -> String {
    let mut rows: Vec<&crate::sim::UnitTimes> = trace.units.iter().collect();
    rows.sort_by(|a, b| a.started_at.cmp(&b.started_at).then(a.name.cmp(&b.name)));
    match format {
        ChartFormat::Text => text_chart(trace, &rows, opts),
        ChartFormat::Svg => svg_chart(trace, &rows, opts),
    }
}

fn text_chart(trace: &ScheduleTrace, rows: &[&crate::sim::UnitTimes], opts: ChartOptions) -> String {
    let end_us = rows
        .iter()
        .map(|r| r.finished_at)
        .max()
        .unwrap_or(trace.boot_completed_at)
        .max(trace.boot_completed_at);
    let cell_us = opts.text_ms_per_cell.max(1) * 1000;
    let cells = (end_us.div_ceil(cell_us)) as usize;
    let name_w = rows
        .iter()
        .map(|r| r.name.as_str().len())
        .max()
        .unwrap_or(4)
        .max(4);

    let mut out = String::new();
    out.push_str(&format!(
        "boot timeline: completed at {} ms, {} units, {} ms per cell\n",
        trace.boot_completed_at / 1000,
        rows.len(),
        opts.text_ms_per_cell
    ));
    out.push_str("legend: '#' start..ready, '-' ready..finish, '*' marks group members\n");
    for r in rows {
        let mut bar = vec![b' '; cells];
        let fill = |bar: &mut Vec<u8>, from: Micros, to: Micros, ch: u8| {
            if to <= from {
                return;
            }
            let a = (from / cell_us) as usize;
            let b = (to.div_ceil(cell_us) as usize).min(bar.len());
            for c in bar.iter_mut().take(b).skip(a) {
                if *c == b' ' {
                    *c = ch;
                }
            }
        };
        fill(&mut bar, r.started_at, r.ready_at, b'#');
        fill(&mut bar, r.ready_at, r.finished_at, b'-');
        if r.ready_at == r.started_at && r.finished_at == r.started_at {
            // Zero-width unit: still show where it sat.
            let c = ((r.started_at / cell_us) as usize).min(cells.saturating_sub(1));
            if cells > 0 {
                bar[c] = b'#';
            }
        }
        let marker = if r.member { '*' } else { ' ' };
        out.push_str(&format!(
            "{marker}{:name_w$} |{}|\n",
            r.name.as_str(),
            String::from_utf8(bar).unwrap()
        ));
    }
    out
}

fn svg_chart(trace: &ScheduleTrace, rows: &[&crate::sim::UnitTimes], opts: ChartOptions) -> String {
    const ROW_H: u64 = 14;
    const BAR_H: u64 = 10;
    const LEFT: u64 = 220;
    const TOP: u64 = 30;
    let per_px = opts.svg_ms_per_px.max(1) * 1000;
    let px = |us: Micros| us / per_px;
    let end_us = rows
        .iter()
        .map(|r| r.finished_at)
        .max()
        .unwrap_or(trace.boot_completed_at)
        .max(trace.boot_completed_at);
    let width = LEFT + px(end_us) + 40;
    let height = TOP + rows.len() as u64 * ROW_H + 20;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"10\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"4\" y=\"14\">boot timeline: completed at {} ms ({} units)</text>\n",
        trace.boot_completed_at / 1000,
        rows.len()
    ));
    // Completion marker.
    out.push_str(&format!(
        "<line x1=\"{x}\" y1=\"{TOP}\" x2=\"{x}\" y2=\"{h}\" stroke=\"#c03030\" \
         stroke-dasharray=\"4,3\"/>\n",
        x = LEFT + px(trace.boot_completed_at),
        h = height - 10,
    ));
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + i as u64 * ROW_H;
        let (run_fill, tail_fill) = if r.member {
            ("#c03030", "#e8a0a0")
        } else {
            ("#4878a8", "#b8cce0")
        };
        out.push_str(&format!(
            "<text x=\"4\" y=\"{ty}\">{}{}</text>\n",
            if r.member { "*" } else { "" },
            r.name.as_str(),
            ty = y + BAR_H - 1,
        ));
        let solid_w = px(r.ready_at).saturating_sub(px(r.started_at));
        let tail_w = px(r.finished_at).saturating_sub(px(r.ready_at));
        if solid_w > 0 {
            out.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{solid_w}\" height=\"{BAR_H}\" fill=\"{run_fill}\"/>\n",
                x = LEFT + px(r.started_at),
            ));
        }
        if tail_w > 0 {
            out.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{tail_w}\" height=\"{BAR_H}\" fill=\"{tail_fill}\"/>\n",
                x = LEFT + px(r.ready_at),
            ));
        }
        if solid_w == 0 && tail_w == 0 {
            out.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"1\" height=\"{BAR_H}\" fill=\"{run_fill}\"/>\n",
                x = LEFT + px(r.started_at),
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseDelta {
    pub label: String,
    pub before_us: Micros,
    pub after_us: Micros,
    pub saved_us: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitDelta {
    pub name: UnitName,
    pub before_started_us: Micros,
    pub after_started_us: Micros,
    pub delta_us: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub feature: String,
    pub before: String,
    pub after: String,
    pub saved_us: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Kernel / init / services deltas; they partition the boot span, so
    /// their savings sum to the total exactly.
    pub phases: Vec<PhaseDelta>,
    pub total_before_us: Micros,
    pub total_after_us: Micros,
    pub total_saved_us: i64,
    pub per_unit: Vec<UnitDelta>,
    pub only_in_before: Vec<UnitName>,
    pub only_in_after: Vec<UnitName>,
    pub attribution: Vec<FeatureAttribution>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

fn phase_duration(trace: &ScheduleTrace, label: &str) -> Micros {
    trace
        .phases
        .iter()
        .find(|p| p.label == label)
        .map(|p| p.end_us - p.start_us)
        .unwrap_or(0)
}

/// Compare two boots of (nominally) the same unit corpus. Units present on
/// only one side are listed separately; attribution names the feature flags
/// that differ per phase.
pub fn compare_traces(before: &ScheduleTrace, after: &ScheduleTrace) -> ComparisonReport {
    let boot_phases = ["kernel", "init", "services"];
    let phases: Vec<PhaseDelta> = boot_phases
        .iter()
        .map(|label| {
            let b = phase_duration(before, label);
            let a = phase_duration(after, label);
            PhaseDelta {
                label: label.to_string(),
                before_us: b,
                after_us: a,
                saved_us: b as i64 - a as i64,
            }
        })
        .collect();

    let before_units: BTreeMap<&UnitName, &crate::sim::UnitTimes> =
        before.units.iter().map(|u| (&u.name, u)).collect();
    let after_units: BTreeMap<&UnitName, &crate::sim::UnitTimes> =
        after.units.iter().map(|u| (&u.name, u)).collect();

    let mut per_unit = Vec::new();
    let mut only_in_before = Vec::new();
    let mut only_in_after = Vec::new();
    for (name, b) in &before_units {
        match after_units.get(*name) {
            Some(a) => per_unit.push(UnitDelta {
                name: (*name).clone(),
                before_started_us: b.started_at,
                after_started_us: a.started_at,
                delta_us: b.started_at as i64 - a.started_at as i64,
            }),
            None => only_in_before.push((*name).clone()),
        }
    }
    for name in after_units.keys() {
        if !before_units.contains_key(*name) {
            only_in_after.push((*name).clone());
        }
    }

    let mut attribution = Vec::new();
    let fmt_ms = |us: Micros| format!("{}.{} ms", us / 1000, us % 1000 / 100);
    attribution.push(FeatureAttribution {
        feature: "kernel-phase".to_string(),
        before: fmt_ms(phase_duration(before, "kernel")),
        after: fmt_ms(phase_duration(after, "kernel")),
        saved_us: phases[0].saved_us,
    });
    attribution.push(FeatureAttribution {
        feature: "init-deferral".to_string(),
        before: format!("{:?}", before.meta.defer_policy),
        after: format!("{:?}", after.meta.defer_policy),
        saved_us: phases[1].saved_us,
    });
    attribution.push(FeatureAttribution {
        feature: "services (isolation, prioritization, launch overhead)".to_string(),
        before: format!(
            "group={} overhead={}",
            before.meta.bb_group_enabled,
            fmt_ms(before.meta.rcu_overhead_per_start_us)
        ),
        after: format!(
            "group={} overhead={}",
            after.meta.bb_group_enabled,
            fmt_ms(after.meta.rcu_overhead_per_start_us)
        ),
        saved_us: phases[2].saved_us,
    });

    ComparisonReport {
        phases,
        total_before_us: before.boot_completed_at,
        total_after_us: after.boot_completed_at,
        total_saved_us: before.boot_completed_at as i64 - after.boot_completed_at as i64,
        per_unit,
        only_in_before,
        only_in_after,
        attribution,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub boot_completed_us: Micros,
    pub phase_totals_us: Vec<(String, Micros)>,
    /// Histogram over parallelism levels: (units in flight, ms spent at
    /// that level) across the boot span.
    pub parallelism: Vec<(usize, u64)>,
    pub max_parallelism: usize,
    /// Start delay past boot completion for each deferred task and unit.
    pub deferred_wake_latency_us: Vec<(String, Micros)>,
    pub unit_count: usize,
    pub deferred_count: usize,
    pub phantom_count: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialization cannot fail")
    }
}

/// Summarize one trace: phase totals, a parallelism histogram over the boot
/// span (units in flight per ms, start to finish), and deferred wake
/// latencies.
pub fn emit_metrics(trace: &ScheduleTrace) -> MetricsReport {
    let span_ms = (trace.boot_completed_at / 1000) as usize;
    // Sweep: +1 where a unit starts, -1 where it finishes.
    let mut delta = vec![0i64; span_ms + 1];
    for u in &trace.units {
        if u.phantom {
            continue;
        }
        let s = (u.started_at / 1000) as usize;
        let f = (u.finished_at / 1000) as usize;
        if s >= span_ms {
            continue;
        }
        delta[s] += 1;
        delta[f.min(span_ms)] -= 1;
    }
    let mut histogram: BTreeMap<usize, u64> = BTreeMap::new();
    let mut level = 0i64;
    let mut max_parallelism = 0usize;
    for d in delta.iter().take(span_ms) {
        level += d;
        let l = level.max(0) as usize;
        max_parallelism = max_parallelism.max(l);
        *histogram.entry(l).or_insert(0) += 1;
    }

    let mut wake = Vec::new();
    for d in &trace.deferred_executed {
        wake.push((
            d.label.clone(),
            d.started_at.saturating_sub(trace.boot_completed_at),
        ));
    }
    for u in &trace.units {
        if u.deferred {
            wake.push((
                u.name.to_string(),
                u.started_at.saturating_sub(trace.boot_completed_at),
            ));
        }
    }

    MetricsReport {
        boot_completed_us: trace.boot_completed_at,
        phase_totals_us: trace
            .phases
            .iter()
            .map(|p| (p.label.clone(), p.end_us - p.start_us))
            .collect(),
        parallelism: histogram.into_iter().collect(),
        max_parallelism,
        deferred_wake_latency_us: wake,
        unit_count: trace.units.len(),
        deferred_count: trace.units.iter().filter(|u| u.deferred).count(),
        phantom_count: trace.units.iter().filter(|u| u.phantom).count(),
    }
}
