//! Error metrics, conservation drift and timing reports.

use std::fmt::Write as _;
use std::time::Duration;

use crate::error::{check_len, Error, Result};
use crate::model::ConservedQuantities;
use crate::pod::Component;

/// Running time average of `‖wᵏ − ŵᵏ‖ / ‖wᵏ‖` per component, with the
/// discrete norm `‖w‖² = Σ wᵢ² Δx Δy`.
#[derive(Debug, Clone)]
pub struct RelativeErrorAccumulator {
    nodes: usize,
    sums: [f64; 3],
    count: usize,
}

impl RelativeErrorAccumulator {
    pub fn new(nodes: usize) -> Self {
        RelativeErrorAccumulator {
            nodes,
            sums: [0.0; 3],
            count: 0,
        }
    }

    /// Adds one time level; both states are stacked `(ũ, ṽ, h)`.
    pub fn add(&mut self, full: &[f64], reduced: &[f64]) -> Result<()> {
        check_len("full state", 3 * self.nodes, full.len())?;
        check_len("reduced state", 3 * self.nodes, reduced.len())?;
        let mut ratios = [0.0; 3];
        for c in Component::ALL {
            let w = c.block(full, self.nodes);
            let w_hat = c.block(reduced, self.nodes);
            // the cell area cancels in the ratio
            let den: f64 = w.iter().map(|x| x * x).sum();
            if !(den > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "component {} of the full snapshot has zero norm",
                    c.name()
                )));
            }
            let num: f64 = w.iter().zip(w_hat).map(|(a, b)| (a - b) * (a - b)).sum();
            ratios[c.index()] = (num / den).sqrt();
        }
        for (s, r) in self.sums.iter_mut().zip(ratios) {
            *s += r;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<[f64; 3]> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("no time levels to average".into()));
        }
        Ok(self.sums.map(|s| s / self.count as f64))
    }
}

/// Time-averaged relative L2 errors of `(ũ, ṽ, h)` over levels `k = 1..N_t`;
/// both sequences hold levels `0..=N_t` and the initial level is skipped.
pub fn time_avg_relative_l2<A: AsRef<[f64]>, B: AsRef<[f64]>>(full: &[A], reduced: &[B]) -> Result<[f64; 3]> {
    check_len("trajectory length", full.len(), reduced.len())?;
    let first = full
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let dim = first.as_ref().len();
    if dim % 3 != 0 {
        return Err(Error::InvalidArgument(format!("state length {dim} is not a multiple of 3")));
    }
    let mut acc = RelativeErrorAccumulator::new(dim / 3);
    for (w, w_hat) in full.iter().zip(reduced).skip(1) {
        acc.add(w.as_ref(), w_hat.as_ref())?;
    }
    acc.finish()
}

/// `|Qᵏ − Q_ref|` for every conserved quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    /// One entry per time level `k = 0..=N_t`.
    pub series: Vec<ConservedQuantities>,
    /// Average over `k = 1..=N_t` (or the single entry when there is no other).
    pub mean: ConservedQuantities,
}

fn abs_diff(a: &ConservedQuantities, b: &ConservedQuantities) -> ConservedQuantities {
    ConservedQuantities {
        energy: (a.energy - b.energy).abs(),
        enstrophy: (a.enstrophy - b.enstrophy).abs(),
        mass: (a.mass - b.mass).abs(),
        vorticity: (a.vorticity - b.vorticity).abs(),
    }
}

/// Drift relative to the first entry of the series.
pub fn conservation_drift(series: &[ConservedQuantities]) -> Result<Drift> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty conserved-quantity series".into()))?;
    conservation_drift_from(series, first)
}

/// Drift relative to an explicit reference, e.g. the value at the exact
/// initial condition when the series comes from a reduced model.
pub fn conservation_drift_from(series: &[ConservedQuantities], reference: &ConservedQuantities) -> Result<Drift> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("empty conserved-quantity series".into()));
    }
    let drift: Vec<ConservedQuantities> = series.iter().map(|q| abs_diff(q, reference)).collect();
    let tail = if drift.len() > 1 { &drift[1..] } else { &drift[..] };
    let count = tail.len() as f64;
    let mut mean = ConservedQuantities {
        energy: 0.0,
        enstrophy: 0.0,
        mass: 0.0,
        vorticity: 0.0,
    };
    for d in tail {
        mean.energy += d.energy / count;
        mean.enstrophy += d.enstrophy / count;
        mean.mass += d.mass / count;
        mean.vorticity += d.vorticity / count;
    }
    Ok(Drift { series: drift, mean })
}

/// Accuracy and conservation of one reduced model against the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub model: String,
    /// Time-averaged relative L2 errors of `(ũ, ṽ, h)`.
    pub relative_errors: [f64; 3],
    /// Mean `|Qᵏ − Q(z̃⁰)|` with `z̃⁰` the exact initial condition.
    pub drift: ConservedQuantities,
    /// Mean `|Qᵏ − Q⁰|` against the model's own initial value.
    pub self_drift: ConservedQuantities,
}

impl ErrorReport {
    pub fn rows(&self) -> Vec<(String, f64)> {
        let m = &self.model;
        let mut rows: Vec<(String, f64)> = Component::ALL
            .iter()
            .map(|c| (format!("{m}_{}_error", c.name()), self.relative_errors[c.index()]))
            .collect();
        for (name, d) in [("drift", &self.drift), ("self_drift", &self.self_drift)] {
            rows.push((format!("{m}_energy_{name}"), d.energy));
            rows.push((format!("{m}_enstrophy_{name}"), d.enstrophy));
            rows.push((format!("{m}_mass_{name}"), d.mass));
            rows.push((format!("{m}_vorticity_{name}"), d.vorticity));
        }
        rows
    }

    /// Inverse of [`ErrorReport::rows`]; extra rows are ignored.
    pub fn from_rows(model: &str, rows: &[(String, f64)]) -> std::result::Result<Self, String> {
        let get = |name: String| {
            rows.iter()
                .find(|(q, _)| *q == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| format!("missing quantity `{name}`"))
        };
        let drift = |kind: &str| -> std::result::Result<ConservedQuantities, String> {
            Ok(ConservedQuantities {
                energy: get(format!("{model}_energy_{kind}"))?,
                enstrophy: get(format!("{model}_enstrophy_{kind}"))?,
                mass: get(format!("{model}_mass_{kind}"))?,
                vorticity: get(format!("{model}_vorticity_{kind}"))?,
            })
        };
        Ok(ErrorReport {
            model: model.to_string(),
            relative_errors: [
                get(format!("{model}_u_error"))?,
                get(format!("{model}_v_error"))?,
                get(format!("{model}_h_error"))?,
            ],
            drift: drift("drift")?,
            self_drift: drift("self_drift")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Fom,
    PodOffline,
    PodOnline,
    DeimOffline,
    DeimOnline,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Fom => "fom",
            Phase::PodOffline => "pod_offline",
            Phase::PodOnline => "pod_online",
            Phase::DeimOffline => "deim_offline",
            Phase::DeimOnline => "deim_online",
        }
    }
}

/// Wall times of the reduced model of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodTiming {
    pub offline: Duration,
    /// Median over the recorded online runs.
    pub online: Duration,
    pub runs: usize,
    /// `fom / online`.
    pub speedup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub fom: Duration,
    pub pod: Option<MethodTiming>,
    pub deim: Option<MethodTiming>,
}

pub fn median(times: &[Duration]) -> Option<Duration> {
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    match sorted.len() {
        0 => None,
        n if n % 2 == 1 => Some(sorted[n / 2]),
        n => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2),
    }
}

/// Builds the timing report from `(phase, wall time)` records. The FOM must
/// be present, and each reduced method needs both its offline and online
/// phases or neither.
pub fn benchmark_report(records: &[(Phase, Duration)]) -> Result<TimingReport> {
    let collect = |phase: Phase| -> Vec<Duration> {
        records.iter().filter(|(p, _)| *p == phase).map(|(_, t)| *t).collect()
    };
    if let Some((phase, _)) = records.iter().find(|(_, t)| t.is_zero()) {
        return Err(Error::InvalidArgument(format!("phase {} has zero wall time", phase.name())));
    }
    let fom = median(&collect(Phase::Fom))
        .ok_or_else(|| Error::InvalidArgument("timing records lack the fom phase".into()))?;
    let method = |offline: Phase, online: Phase| -> Result<Option<MethodTiming>> {
        let off = collect(offline);
        let on = collect(online);
        match (median(&off), median(&on)) {
            (None, None) => Ok(None),
            (Some(offline), Some(online_median)) => Ok(Some(MethodTiming {
                offline,
                online: online_median,
                runs: on.len(),
                speedup: fom.as_secs_f64() / online_median.as_secs_f64(),
            })),
            (None, Some(_)) => Err(Error::InvalidArgument(format!(
                "timing records lack the {} phase",
                offline.name()
            ))),
            (Some(_), None) => Err(Error::InvalidArgument(format!(
                "timing records lack the {} phase",
                online.name()
            ))),
        }
    };
    Ok(TimingReport {
        fom,
        pod: method(Phase::PodOffline, Phase::PodOnline)?,
        deim: method(Phase::DeimOffline, Phase::DeimOnline)?,
    })
}

impl TimingReport {
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("fom_seconds".to_string(), self.fom.as_secs_f64())];
        for (name, t) in [("pod", &self.pod), ("deim", &self.deim)] {
            if let Some(t) = t {
                rows.push((format!("{name}_offline_seconds"), t.offline.as_secs_f64()));
                rows.push((format!("{name}_online_seconds"), t.online.as_secs_f64()));
                rows.push((format!("{name}_online_runs"), t.runs as f64));
                rows.push((format!("{name}_speedup"), t.speedup));
            }
        }
        rows
    }
}

/// Human-readable tables of errors, conservation and timings.
pub fn summary_table(errors: &[ErrorReport], timing: Option<&TimingReport>) -> String {
    let mut out = String::new();
    if !errors.is_empty() {
        let _ = writeln!(out, "{:<8} {:>12} {:>12} {:>12} {:>12} {:>12}", "model", "u err", "v err", "h err", "energy", "enstrophy");
        for e in errors {
            let [u, v, h] = e.relative_errors;
            let _ = writeln!(
                out,
                "{:<8} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}",
                e.model, u, v, h, e.drift.energy, e.drift.enstrophy
            );
        }
    }
    if let Some(t) = timing {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "{:<8} {:>12} {:>12} {:>10}", "phase", "offline s", "online s", "speedup");
        let _ = writeln!(out, "{:<8} {:>12} {:>12.3} {:>10}", "fom", "-", t.fom.as_secs_f64(), "1.00");
        for (name, m) in [("pod", &t.pod), ("deim", &t.deim)] {
            if let Some(m) = m {
                let _ = writeln!(
                    out,
                    "{:<8} {:>12.3} {:>12.3} {:>10.2}",
                    name,
                    m.offline.as_secs_f64(),
                    m.online.as_secs_f64(),
                    m.speedup
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(e: f64, z: f64) -> ConservedQuantities {
        ConservedQuantities {
            energy: e,
            enstrophy: z,
            mass: 1.0,
            vorticity: 0.5,
        }
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let traj = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; 3];
        assert_eq!(time_avg_relative_l2(&traj, &traj).unwrap(), [0.0; 3]);
    }

    #[test]
    fn doubled_trajectory_has_unit_error() {
        let full = vec![vec![1.0, -2.0, 3.0, 4.0, 0.5, 6.0], vec![2.0, 1.0, -1.0, 1.0, 1.0, 1.0]];
        let twice: Vec<Vec<f64>> = full.iter().map(|s| s.iter().map(|x| 2.0 * x).collect()).collect();
        for e in time_avg_relative_l2(&full, &twice).unwrap() {
            assert!((e - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_level_is_not_averaged() {
        let full = vec![vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]];
        let reduced = vec![vec![5.0; 3], vec![1.5; 3], vec![1.0; 3]];
        let e = time_avg_relative_l2(&full, &reduced).unwrap();
        assert!((e[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_norm_snapshot_is_an_error() {
        let full = vec![vec![1.0; 3], vec![0.0, 1.0, 1.0]];
        assert!(time_avg_relative_l2(&full, &full).is_err());
        assert!(time_avg_relative_l2(&full[..1], &full).is_err());
    }

    #[test]
    fn constant_series_has_zero_drift() {
        let d = conservation_drift(&[q(1.0, 2.0); 4]).unwrap();
        assert!(d.series.iter().all(|x| x.energy == 0.0 && x.enstrophy == 0.0));
        assert_eq!(d.mean.energy, 0.0);
    }

    #[test]
    fn drift_mean_skips_the_initial_level() {
        let d = conservation_drift(&[q(1.0, 1.0), q(1.5, 1.0), q(0.5, 3.0)]).unwrap();
        assert_eq!(d.series[0].energy, 0.0);
        assert!((d.mean.energy - 0.5).abs() < 1e-15);
        assert!((d.mean.enstrophy - 1.0).abs() < 1e-15);
        let r = conservation_drift_from(&[q(1.0, 1.0), q(1.5, 1.0)], &q(2.0, 1.0)).unwrap();
        assert_eq!(r.series[0].energy, 1.0);
        assert!((r.mean.energy - 0.5).abs() < 1e-15);
        assert!(conservation_drift(&[]).is_err());
    }

    #[test]
    fn equal_times_give_unit_speedup() {
        let t = Duration::from_millis(250);
        let r = benchmark_report(&[
            (Phase::Fom, t),
            (Phase::PodOffline, t),
            (Phase::PodOnline, t),
            (Phase::PodOnline, t),
            (Phase::PodOnline, t),
        ])
        .unwrap();
        let pod = r.pod.unwrap();
        assert_eq!(pod.speedup, 1.0);
        assert_eq!(pod.runs, 3);
        assert!(r.deim.is_none());
    }

    #[test]
    fn speedup_uses_the_online_median() {
        let s = Duration::from_secs;
        let r = benchmark_report(&[
            (Phase::Fom, s(30)),
            (Phase::DeimOffline, s(100)),
            (Phase::DeimOnline, s(2)),
            (Phase::DeimOnline, s(9)),
            (Phase::DeimOnline, s(3)),
        ])
        .unwrap();
        let deim = r.deim.unwrap();
        assert_eq!(deim.online, s(3));
        assert_eq!(deim.speedup, 10.0);
    }

    #[test]
    fn missing_phases_are_errors() {
        let t = Duration::from_millis(5);
        assert!(benchmark_report(&[(Phase::PodOnline, t)]).is_err());
        assert!(benchmark_report(&[(Phase::Fom, t), (Phase::PodOnline, t)]).is_err());
        assert!(benchmark_report(&[(Phase::Fom, t), (Phase::DeimOffline, t)]).is_err());
        assert!(benchmark_report(&[(Phase::Fom, Duration::ZERO)]).is_err());
    }

    #[test]
    fn summary_mentions_every_model() {
        let report = ErrorReport {
            model: "pod".into(),
            relative_errors: [0.1, 0.2, 0.003],
            drift: q(1e-3, 2e-3),
            self_drift: q(1e-13, 1e-3),
        };
        let timing = benchmark_report(&[(Phase::Fom, Duration::from_secs(2))]).unwrap();
        let s = summary_table(&[report.clone()], Some(&timing));
        assert!(s.contains("pod") && s.contains("fom"));
        assert_eq!(report.rows().len(), 11);
        assert_eq!(ErrorReport::from_rows("pod", &report.rows()).unwrap(), report);
        assert!(ErrorReport::from_rows("deim", &report.rows()).is_err());
    }

    proptest! {
        #[test]
        fn scaling_gives_the_scale_as_error(eps in 1e-6f64..10.0, seed in 1u64..1000) {
            let full: Vec<Vec<f64>> = (0..3)
                .map(|k| (0..9).map(|i| ((seed + k * 9 + i) as f64).sin() + 2.0).collect())
                .collect();
            let scaled: Vec<Vec<f64>> = full.iter().map(|s| s.iter().map(|x| (1.0 + eps) * x).collect()).collect();
            for e in time_avg_relative_l2(&full, &scaled).unwrap() {
                prop_assert!((e - eps).abs() <= 1e-12 * (1.0 + eps));
            }
        }

        #[test]
        fn drift_is_nonnegative_and_starts_at_zero(values in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            let series: Vec<ConservedQuantities> = values.iter().map(|&v| q(v, v * v)).collect();
            let d = conservation_drift(&series).unwrap();
            prop_assert_eq!(d.series[0].energy, 0.0);
            prop_assert!(d.series.iter().all(|x| x.energy >= 0.0 && x.enstrophy >= 0.0));
        }
    }
}
