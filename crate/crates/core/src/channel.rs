//! Intermittent link model: alternating up/down periods sampled ahead of time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifies the generator used for every sampled quantity. Written into reports.
pub const RNG_ID: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

/// Intervals shorter than this at the end of the horizon are absorbed into
/// the previous interval instead of producing a sliver.
const SLIVER: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("time {t} outside schedule horizon [0, {horizon})")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("invalid interval [{start}, {end})")]
    InvalidInterval { start: f64, end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelStatus {
    Up,
    Down,
}

/// Gaussian period lengths, truncated below at `min_period` by redrawing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ChannelParams {
    pub mean_up: f64,
    pub std_up: f64,
    pub mean_down: f64,
    pub std_down: f64,
    pub min_period: f64,
}

#[derive(Deserialize)]
#[serde(default)]
struct RawParams {
    mean_up: f64,
    std_up: f64,
    mean_down: f64,
    std_down: f64,
    min_period: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        let p = ChannelParams::default();
        Self {
            mean_up: p.mean_up,
            std_up: p.std_up,
            mean_down: p.mean_down,
            std_down: p.std_down,
            min_period: p.min_period,
        }
    }
}

impl TryFrom<RawParams> for ChannelParams {
    type Error = ChannelError;
    fn try_from(r: RawParams) -> Result<Self, Self::Error> {
        ChannelParams::new(r.mean_up, r.std_up, r.mean_down, r.std_down, r.min_period)
    }
}

impl Default for ChannelParams {
    /// Up 3.2 s ± 0.15 s, down 0.8 s ± 0.1 s, 50 ms floor.
    fn default() -> Self {
        Self {
            mean_up: 3.2,
            std_up: 0.15,
            mean_down: 0.8,
            std_down: 0.1,
            min_period: 0.05,
        }
    }
}

impl ChannelParams {
    pub fn new(
        mean_up: f64,
        std_up: f64,
        mean_down: f64,
        std_down: f64,
        min_period: f64,
    ) -> Result<Self, ChannelError> {
        let all = [mean_up, std_up, mean_down, std_down, min_period];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ChannelError::InvalidParams("non-finite value".into()));
        }
        if mean_up <= 0.0 || mean_down <= 0.0 {
            return Err(ChannelError::InvalidParams("means must be positive".into()));
        }
        if std_up < 0.0 || std_down < 0.0 {
            return Err(ChannelError::InvalidParams("standard deviations must be >= 0".into()));
        }
        if min_period <= 0.0 {
            return Err(ChannelError::InvalidParams("min_period must be positive".into()));
        }
        if mean_up < min_period || mean_down < min_period {
            // Redraw would almost never terminate.
            return Err(ChannelError::InvalidParams("means must be >= min_period".into()));
        }
        Ok(Self { mean_up, std_up, mean_down, std_down, min_period })
    }

    /// Long-run fraction of time spent down.
    pub fn expected_outage_fraction(&self) -> f64 {
        self.mean_down / (self.mean_up + self.mean_down)
    }
}

/// Draws alternating up/down durations from a seeded generator.
pub struct PeriodSampler {
    rng: ChaCha8Rng,
    up: Normal<f64>,
    down: Normal<f64>,
    min_period: f64,
}

impl PeriodSampler {
    pub fn new(params: &ChannelParams, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            // Validated parameters: finite mean, std >= 0.
            up: Normal::new(params.mean_up, params.std_up).expect("validated"),
            down: Normal::new(params.mean_down, params.std_down).expect("validated"),
            min_period: params.min_period,
        }
    }

    pub fn sample(&mut self, status: ChannelStatus) -> f64 {
        let dist = match status {
            ChannelStatus::Up => &self.up,
            ChannelStatus::Down => &self.down,
        };
        loop {
            let d = dist.sample(&mut self.rng);
            if d >= self.min_period {
                return d;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub status: ChannelStatus,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Contiguous, alternating intervals covering `[0, horizon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageSchedule {
    intervals: Vec<Interval>,
    horizon: f64,
}

impl OutageSchedule {
    /// A link that never drops.
    pub fn always_up(horizon: f64) -> Self {
        Self {
            intervals: vec![Interval { start: 0.0, end: horizon, status: ChannelStatus::Up }],
            horizon,
        }
    }

    /// Builds a schedule from explicit down intervals (sorted or not; overlaps merge).
    pub fn from_down_intervals(horizon: f64, downs: &[(f64, f64)]) -> Result<Self, ChannelError> {
        let mut downs: Vec<(f64, f64)> = downs.to_vec();
        for &(s, e) in &downs {
            if !(s.is_finite() && e.is_finite()) || s < 0.0 || e < s {
                return Err(ChannelError::InvalidInterval { start: s, end: e });
            }
        }
        downs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut intervals = Vec::new();
        let mut cursor = 0.0;
        for (s, e) in downs {
            let (s, e) = (s.min(horizon), e.min(horizon));
            if e <= s || e <= cursor {
                continue;
            }
            let s = s.max(cursor);
            if s > cursor {
                intervals.push(Interval { start: cursor, end: s, status: ChannelStatus::Up });
            } else if let Some(last) = intervals.last_mut() {
                if last.status == ChannelStatus::Down {
                    last.end = e;
                    cursor = e;
                    continue;
                }
            }
            intervals.push(Interval { start: s, end: e, status: ChannelStatus::Down });
            cursor = e;
        }
        if cursor < horizon {
            intervals.push(Interval { start: cursor, end: horizon, status: ChannelStatus::Up });
        }
        Ok(Self { intervals, horizon })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Down intervals as `(start, end)` pairs.
    pub fn outages(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.intervals
            .iter()
            .filter(|i| i.status == ChannelStatus::Down)
            .map(|i| (i.start, i.end))
    }

    /// Half-open lookup: an interval owns its start instant.
    pub fn status_at(&self, t: f64) -> Result<ChannelStatus, ChannelError> {
        if !(0.0..self.horizon).contains(&t) {
            return Err(ChannelError::OutOfHorizon { t, horizon: self.horizon });
        }
        let idx = self.intervals.partition_point(|i| i.start <= t);
        Ok(self.intervals[idx - 1].status)
    }

    pub fn outage_fraction(&self) -> f64 {
        self.down_time_within(0.0, self.horizon) / self.horizon
    }

    /// Total down time overlapping `[from, to)`.
    pub fn down_time_within(&self, from: f64, to: f64) -> f64 {
        self.outages()
            .map(|(s, e)| (e.min(to) - s.max(from)).max(0.0))
            .sum()
    }

    /// Writes `start,end,status` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("start,end,status\n");
        for i in &self.intervals {
            let status = match i.status {
                ChannelStatus::Up => "up",
                ChannelStatus::Down => "down",
            };
            out.push_str(&format!("{},{},{}\n", i.start, i.end, status));
        }
        out
    }
}

/// Samples a full schedule for `[0, horizon)`, starting with an up period.
pub fn generate_schedule(params: &ChannelParams, horizon: f64, seed: u64) -> OutageSchedule {
    assert!(horizon > 0.0 && horizon.is_finite(), "horizon must be positive");
    let mut sampler = PeriodSampler::new(params, seed);
    let mut intervals = Vec::new();
    let mut start = 0.0;
    let mut status = ChannelStatus::Up;
    while start < horizon {
        let mut end = start + sampler.sample(status);
        if end > horizon - SLIVER {
            end = horizon;
        }
        intervals.push(Interval { start, end, status });
        start = end;
        status = match status {
            ChannelStatus::Up => ChannelStatus::Down,
            ChannelStatus::Down => ChannelStatus::Up,
        };
    }
    OutageSchedule { intervals, horizon }
}

pub fn status_at(schedule: &OutageSchedule, t: f64) -> Result<ChannelStatus, ChannelError> {
    schedule.status_at(t)
}

pub fn outage_fraction(schedule: &OutageSchedule) -> f64 {
    schedule.outage_fraction()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixed() -> ChannelParams {
        ChannelParams::new(3.2, 0.0, 0.8, 0.0, 0.05).unwrap()
    }

    #[test]
    fn zero_std_schedule_is_forced() {
        let s = generate_schedule(&fixed(), 8.0, 1);
        let expect = [
            (0.0, 3.2, ChannelStatus::Up),
            (3.2, 4.0, ChannelStatus::Down),
            (4.0, 7.2, ChannelStatus::Up),
            (7.2, 8.0, ChannelStatus::Down),
        ];
        assert_eq!(s.intervals().len(), expect.len());
        for (i, (a, b, st)) in s.intervals().iter().zip(expect) {
            assert!((i.start - a).abs() < 1e-12 && (i.end - b).abs() < 1e-12, "{i:?}");
            assert_eq!(i.status, st);
        }
    }

    #[test]
    fn short_horizon_clips_first_up() {
        let s = generate_schedule(&ChannelParams::default(), 1.0, 3);
        assert_eq!(s.intervals().len(), 1);
        assert_eq!(s.intervals()[0], Interval { start: 0.0, end: 1.0, status: ChannelStatus::Up });
    }

    #[test]
    fn status_lookup_boundaries() {
        let s = generate_schedule(&fixed(), 8.0, 1);
        assert_eq!(s.status_at(0.0).unwrap(), ChannelStatus::Up);
        assert_eq!(s.status_at(3.2).unwrap(), ChannelStatus::Down);
        assert_eq!(s.status_at(3.999).unwrap(), ChannelStatus::Down);
        assert_eq!(s.status_at(4.0).unwrap(), ChannelStatus::Up);
        assert_eq!(s.status_at(7.9).unwrap(), ChannelStatus::Down);
        assert!(s.status_at(8.0).is_err());
        assert!(s.status_at(-0.1).is_err());
    }

    #[test]
    fn outage_fraction_cases() {
        assert_eq!(OutageSchedule::always_up(10.0).outage_fraction(), 0.0);
        // 2500 whole cycles.
        let s = generate_schedule(&fixed(), 10_000.0, 9);
        assert!((s.outage_fraction() - 0.2).abs() < 1e-9, "{}", s.outage_fraction());
    }

    #[test]
    fn random_outage_fraction_matches_direct_sum() {
        let s = generate_schedule(&ChannelParams::default(), 137.0, 77);
        let mut down = 0.0;
        for i in s.intervals() {
            if i.status == ChannelStatus::Down {
                down += i.end - i.start;
            }
        }
        assert!((s.outage_fraction() - down / 137.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ChannelParams::new(0.0, 0.1, 0.8, 0.1, 0.05).is_err());
        assert!(ChannelParams::new(3.2, -0.1, 0.8, 0.1, 0.05).is_err());
        assert!(ChannelParams::new(3.2, 0.1, 0.8, 0.1, 0.0).is_err());
        assert!(ChannelParams::new(3.2, 0.1, f64::NAN, 0.1, 0.05).is_err());
        let toml_err: Result<ChannelParams, _> = toml::from_str("mean_up = -1.0");
        assert!(toml_err.is_err());
    }

    #[test]
    fn from_down_intervals_merges_and_alternates() {
        let s = OutageSchedule::from_down_intervals(10.0, &[(5.0, 6.0), (1.0, 2.0), (5.5, 7.0)]).unwrap();
        let kinds: Vec<_> = s.intervals().iter().map(|i| (i.start, i.end, i.status)).collect();
        assert_eq!(
            kinds,
            vec![
                (0.0, 1.0, ChannelStatus::Up),
                (1.0, 2.0, ChannelStatus::Down),
                (2.0, 5.0, ChannelStatus::Up),
                (5.0, 7.0, ChannelStatus::Down),
                (7.0, 10.0, ChannelStatus::Up),
            ]
        );
        assert!(OutageSchedule::from_down_intervals(10.0, &[(3.0, 2.0)]).is_err());
    }

    #[test]
    fn csv_dump() {
        let s = generate_schedule(&fixed(), 8.0, 1);
        let csv = s.to_csv();
        assert!(csv.starts_with("start,end,status\n0,3.2,up\n3.2,4,down\n"));
    }

    proptest! {
        #[test]
        fn schedule_invariants(seed in any::<u64>(), horizon in 0.5..200.0f64) {
            let p = ChannelParams::new(1.0, 0.8, 0.3, 0.4, 0.05).unwrap();
            let s = generate_schedule(&p, horizon, seed);
            let iv = s.intervals();
            prop_assert_eq!(iv[0].start, 0.0);
            prop_assert_eq!(iv[0].status, ChannelStatus::Up);
            prop_assert_eq!(iv.last().unwrap().end, horizon);
            for w in iv.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
                prop_assert_ne!(w[0].status, w[1].status);
            }
            // Every sampled duration respects the floor; only the final clipped one may not.
            for i in &iv[..iv.len() - 1] {
                prop_assert!(i.duration() >= 0.05);
            }
            prop_assert_eq!(&generate_schedule(&p, horizon, seed), &s);
        }
    }
}
