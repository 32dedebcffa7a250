use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::attack::parse_call;
use crate::error::{Error, Result};
use crate::fedtwin::ModelUpdate;
use crate::learncore::ParamVector;
use crate::scalar::Real;

/// Consistency constant turning a median absolute deviation into a
/// standard-deviation estimate under normality.
pub const MAD_SCALE: f64 = 1.4826;

/// Lower bound on the spread estimate, relative to the median distance.
/// With ten near-identical honest updates the sample MAD alone is too noisy
/// and would cut clean updates.
pub const SPREAD_FLOOR: f64 = 0.05;

/// Server-side aggregation rule, written in configs as its label, e.g.
/// `"trimmed_mean(0.2)"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RobustRule {
    Mean,
    CoordinateMedian,
    TrimmedMean { beta: f64 },
    DistanceFilter { k: f64 },
    /// Distance filtering followed by a twin check of the aggregate.
    FilteredTwinValidated { k: f64 },
}

impl RobustRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::TrimmedMean { beta } if !(0.0..0.5).contains(&beta) => {
                Err(Error::invalid(format!("trim fraction {beta} outside [0, 0.5)")))
            }
            Self::DistanceFilter { k } | Self::FilteredTwinValidated { k } if !(k >= 0.0 && k.is_finite()) => {
                Err(Error::invalid(format!("filter width {k} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Mean => "mean".into(),
            Self::CoordinateMedian => "coordinate_median".into(),
            Self::TrimmedMean { beta } => format!("trimmed_mean({beta})"),
            Self::DistanceFilter { k } => format!("distance_filter({k})"),
            Self::FilteredTwinValidated { k } => format!("filtered_twin_validated({k})"),
        }
    }
}

impl FromStr for RobustRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rule = match parse_call(s)? {
            ("mean", None) => Self::Mean,
            ("coordinate_median", None) => Self::CoordinateMedian,
            ("trimmed_mean", Some(beta)) => Self::TrimmedMean { beta },
            ("distance_filter", Some(k)) => Self::DistanceFilter { k },
            ("filtered_twin_validated", Some(k)) => Self::FilteredTwinValidated { k },
            _ => return Err(Error::invalid(format!("unknown aggregation rule `{s}`"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl TryFrom<String> for RobustRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RobustRule> for String {
    fn from(r: RobustRule) -> String {
        r.label()
    }
}

/// Result of one aggregation. `fallback` is set when the previous global
/// model was kept instead of a new aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateOutcome<T> {
    pub params: ParamVector<T>,
    /// Client ids whose updates entered the aggregate.
    pub kept: Vec<usize>,
    pub fallback: bool,
}

fn sorted_by_client<T: Real>(updates: &[ModelUpdate<T>]) -> Result<Vec<&ModelUpdate<T>>> {
    let first = updates.first().ok_or(Error::Empty("update set"))?;
    let mut v: Vec<&ModelUpdate<T>> = updates.iter().collect();
    if let Some(u) = v.iter().find(|u| u.params.len() != first.params.len()) {
        return Err(Error::DimensionMismatch {
            expected: first.params.len(),
            actual: u.params.len(),
        });
    }
    v.sort_by_key(|u| u.client_id);
    Ok(v)
}

/// `x0 + sum_i w_i (x_i - x0)` with normalised weights and `x0` the first
/// value, so identical inputs come back exactly.
fn anchored_mean(mut items: impl Iterator<Item = (f64, f64)>) -> f64 {
    let Some((w0, x0)) = items.next() else {
        return 0.0;
    };
    let (mut total, mut acc) = (w0, 0.0);
    for (w, x) in items {
        total += w;
        acc += w * (x - x0);
    }
    x0 + acc / total
}

/// Sample-count weighted mean of `updates`, accumulated in client order.
fn mean_of<T: Real>(updates: &[&ModelUpdate<T>]) -> ParamVector<T> {
    let dim = updates[0].params.len();
    let values = (0..dim)
        .map(|j| {
            let items = updates.iter().map(|u| (u.sample_count as f64, u.params.as_slice()[j].to_f64_lossy()));
            T::lit(anchored_mean(items))
        })
        .collect();
    updates[0].params.with_values(values)
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
/// Reorders the slice.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn coordinate_median<T: Real>(updates: &[&ModelUpdate<T>]) -> ParamVector<T> {
    let dim = updates[0].params.len();
    let mut column = vec![0.0; updates.len()];
    let values = (0..dim)
        .map(|j| {
            for (c, u) in column.iter_mut().zip(updates) {
                *c = u.params.as_slice()[j].to_f64_lossy();
            }
            T::lit(median(&mut column))
        })
        .collect();
    updates[0].params.with_values(values)
}

/// Per-coordinate mean after dropping the `ceil(beta n)` largest and
/// smallest values. Survivors are weighted by sample count and accumulated
/// in client order, so `beta = 0` reproduces [`RobustRule::Mean`] exactly.
fn trimmed_mean<T: Real>(updates: &[&ModelUpdate<T>], beta: f64) -> Result<ParamVector<T>> {
    let n = updates.len();
    let cut = (beta * n as f64).ceil() as usize;
    if n <= 2 * cut {
        return Err(Error::invalid(format!("cannot trim {cut} from each side of {n} updates")));
    }
    if cut == 0 {
        return Ok(mean_of(updates));
    }
    let dim = updates[0].params.len();
    let mut order: Vec<usize> = (0..n).collect();
    let values = (0..dim)
        .map(|j| {
            let x = |i: usize| updates[i].params.as_slice()[j].to_f64_lossy();
            order.sort_by(|&a, &b| x(a).total_cmp(&x(b)).then(a.cmp(&b)));
            let mut keep: Vec<usize> = order[cut..n - cut].to_vec();
            keep.sort_unstable();
            T::lit(anchored_mean(keep.iter().map(|&i| (updates[i].sample_count as f64, x(i)))))
        })
        .collect();
    Ok(updates[0].params.with_values(values))
}

/// Indices of updates whose distance to the coordinate median is at most
/// `median distance + k * spread`, where the spread is the scaled MAD but at
/// least [`SPREAD_FLOOR`] times the median distance. The update at the
/// median distance always survives.
pub fn distance_filter_keep<T: Real>(updates: &[&ModelUpdate<T>], k: f64) -> Vec<usize> {
    let centre = coordinate_median(updates);
    let dist: Vec<f64> = updates.iter().map(|u| u.params.l2_distance(&centre).to_f64_lossy()).collect();
    let med = median(&mut dist.clone());
    let mut dev: Vec<f64> = dist.iter().map(|d| (d - med).abs()).collect();
    let spread = (MAD_SCALE * median(&mut dev)).max(SPREAD_FLOOR * med);
    let limit = med + k * spread;
    (0..updates.len()).filter(|&i| dist[i] <= limit).collect()
}

/// Aggregates `updates` under `rule`. `previous` is the current global model
/// and `accept` decides whether a twin-validated aggregate may replace it.
pub fn robust_aggregate<T, F>(
    updates: &[ModelUpdate<T>],
    rule: &RobustRule,
    previous: &ParamVector<T>,
    accept: F,
) -> Result<AggregateOutcome<T>>
where
    T: Real,
    F: FnOnce(&ParamVector<T>) -> Result<bool>,
{
    rule.validate()?;
    let ups = sorted_by_client(updates)?;
    if ups[0].params.len() != previous.len() {
        return Err(Error::DimensionMismatch {
            expected: previous.len(),
            actual: ups[0].params.len(),
        });
    }
    let all: Vec<usize> = ups.iter().map(|u| u.client_id).collect();
    let plain = |params| AggregateOutcome {
        params,
        kept: all.clone(),
        fallback: false,
    };
    match *rule {
        RobustRule::Mean => Ok(plain(mean_of(&ups))),
        RobustRule::CoordinateMedian => Ok(plain(coordinate_median(&ups))),
        RobustRule::TrimmedMean { beta } => Ok(plain(trimmed_mean(&ups, beta)?)),
        RobustRule::DistanceFilter { k } | RobustRule::FilteredTwinValidated { k } => {
            let keep = distance_filter_keep(&ups, k);
            let survivors: Vec<&ModelUpdate<T>> = keep.iter().map(|&i| ups[i]).collect();
            let kept: Vec<usize> = survivors.iter().map(|u| u.client_id).collect();
            if survivors.is_empty() {
                return Ok(AggregateOutcome {
                    params: previous.clone(),
                    kept,
                    fallback: true,
                });
            }
            let params = mean_of(&survivors);
            if matches!(rule, RobustRule::FilteredTwinValidated { .. }) && !accept(&params)? {
                return Ok(AggregateOutcome {
                    params: previous.clone(),
                    kept,
                    fallback: true,
                });
            }
            Ok(AggregateOutcome {
                params,
                kept,
                fallback: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn up(id: usize, v: &[f64]) -> ModelUpdate<f64> {
        ModelUpdate::new(ParamVector::from_slice(v), id, 0, 1).unwrap()
    }

    fn agg(ups: &[ModelUpdate<f64>], rule: RobustRule) -> AggregateOutcome<f64> {
        let prev = ParamVector::from_slice(&vec![0.0; ups[0].params.len()]);
        robust_aggregate(ups, &rule, &prev, |_| Ok(true)).unwrap()
    }

    const RULES: [RobustRule; 5] = [
        RobustRule::Mean,
        RobustRule::CoordinateMedian,
        RobustRule::TrimmedMean { beta: 0.2 },
        RobustRule::DistanceFilter { k: 3.0 },
        RobustRule::FilteredTwinValidated { k: 3.0 },
    ];

    #[test]
    fn labels_round_trip() {
        for r in RULES {
            assert_eq!(r.label().parse::<RobustRule>().unwrap(), r);
        }
        assert!("trimmed_mean(0.6)".parse::<RobustRule>().is_err());
        assert!("krum".parse::<RobustRule>().is_err());
    }

    #[test]
    fn median_ignores_single_outlier() {
        let ups = [up(0, &[1.0]), up(1, &[2.0]), up(2, &[100.0])];
        assert_eq!(agg(&ups, RobustRule::CoordinateMedian).params.as_slice(), &[2.0]);
    }

    #[test]
    fn distance_filter_hand_example() {
        // median vector [0.1, 0]; distances 0.1, 0, ~14.07; median distance
        // 0.1 and MAD 0.1, so the limit is 0.1 + 3 * 1.4826 * 0.1 = 0.545
        let ups = [up(0, &[0.0, 0.0]), up(1, &[0.1, 0.0]), up(2, &[10.0, 10.0])];
        let out = agg(&ups, RobustRule::DistanceFilter { k: 3.0 });
        assert_eq!(out.kept, vec![0, 1]);
        assert!((out.params.as_slice()[0] - 0.05).abs() < 1e-15);
        assert_eq!(out.params.as_slice()[1], 0.0);
    }

    #[test]
    fn identical_updates_are_fixed_points() {
        let ups: Vec<_> = (0..5).map(|i| up(i, &[0.3, -1.25, 7.0])).collect();
        for rule in RULES {
            assert_eq!(agg(&ups, rule).params.as_slice(), &[0.3, -1.25, 7.0], "{rule:?}");
        }
    }

    #[test]
    fn mean_weights_by_sample_count() {
        let a = ModelUpdate::new(ParamVector::from_slice(&[0.0]), 0, 0, 1).unwrap();
        let b = ModelUpdate::new(ParamVector::from_slice(&[4.0]), 1, 0, 3).unwrap();
        assert_eq!(agg(&[a, b], RobustRule::Mean).params.as_slice(), &[3.0]);
    }

    #[test]
    fn trimmed_zero_is_bitwise_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ups: Vec<_> = (0..7)
            .map(|i| up(i, &(0..50).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>()))
            .collect();
        assert_eq!(agg(&ups, RobustRule::Mean).params, agg(&ups, RobustRule::TrimmedMean { beta: 0.0 }).params);
    }

    #[test]
    fn trimming_needs_survivors() {
        let ups = [up(0, &[1.0]), up(1, &[2.0])];
        let prev = ParamVector::from_slice(&[0.0]);
        assert!(robust_aggregate(&ups, &RobustRule::TrimmedMean { beta: 0.4 }, &prev, |_| Ok(true)).is_err());
        assert!(robust_aggregate::<f64, _>(&[], &RobustRule::Mean, &prev, |_| Ok(true)).is_err());
    }

    #[test]
    fn rejected_aggregate_falls_back() {
        let ups = [up(0, &[1.0]), up(1, &[1.2])];
        let prev = ParamVector::from_slice(&[9.0]);
        let out = robust_aggregate(&ups, &RobustRule::FilteredTwinValidated { k: 3.0 }, &prev, |_| Ok(false)).unwrap();
        assert!(out.fallback);
        assert_eq!(out.params.as_slice(), &[9.0]);
        let out = robust_aggregate(&ups, &RobustRule::DistanceFilter { k: 3.0 }, &prev, |_| Ok(false)).unwrap();
        assert!(!out.fallback);
    }

    #[test]
    fn honest_noise_is_rarely_filtered() {
        use rand_distr::Distribution;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 400;
        let mut clean = 0;
        let normal = rand_distr::StandardNormal;
        for _ in 0..trials {
            let centre: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ups: Vec<_> = (0..10)
                .map(|i| {
                    let v: Vec<f64> = centre.iter().map(|c| c + 0.01 * Distribution::<f64>::sample(&normal, &mut rng)).collect();
                    up(i, &v)
                })
                .collect();
            if agg(&ups, RobustRule::DistanceFilter { k: 3.0 }).kept.len() == 10 {
                clean += 1;
            }
        }
        assert!(clean as f64 >= 0.95 * trials as f64, "{clean}/{trials}");
    }

    proptest! {
        #[test]
        fn rules_ignore_update_order(seed in 0u64..500, n in 3usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ups: Vec<_> = (0..n)
                .map(|i| up(i, &(0..6).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<_>>()))
                .collect();
            let mut shuffled = ups.clone();
            shuffled.shuffle(&mut rng);
            for rule in RULES {
                prop_assert_eq!(agg(&ups, rule), agg(&shuffled, rule));
            }
        }

        #[test]
        fn median_stays_in_honest_range(seed in 0u64..500, honest in 3usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bad = honest.div_ceil(2) - 1;
            let mut ups: Vec<_> = (0..honest)
                .map(|i| up(i, &(0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
                .collect();
            let lo: Vec<f64> = (0..4).map(|j| ups.iter().map(|u| u.params.as_slice()[j]).fold(f64::INFINITY, f64::min)).collect();
            let hi: Vec<f64> = (0..4).map(|j| ups.iter().map(|u| u.params.as_slice()[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
            for b in 0..bad {
                ups.push(up(honest + b, &(0..4).map(|_| rng.random_range(-1e6..1e6)).collect::<Vec<_>>()));
            }
            let out = agg(&ups, RobustRule::CoordinateMedian);
            for j in 0..4 {
                prop_assert!(out.params.as_slice()[j] >= lo[j] && out.params.as_slice()[j] <= hi[j]);
            }
        }

        #[test]
        fn trimming_removes_extreme_adversaries(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let honest: Vec<_> = (0..8)
                .map(|i| up(i, &(0..5).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
                .collect();
            let mut all = honest.clone();
            all.push(up(8, &[50.0; 5]));
            all.push(up(9, &[-50.0; 5]));
            // beta 0.1 trims one value per side out of ten
            let trimmed = agg(&all, RobustRule::TrimmedMean { beta: 0.1 });
            for j in 0..5 {
                let mut col: Vec<f64> = honest.iter().map(|u| u.params.as_slice()[j]).collect();
                col.sort_by(f64::total_cmp);
                let expected = col[..].iter().sum::<f64>() / 8.0;
                prop_assert!((trimmed.params.as_slice()[j] - expected).abs() < 1e-12);
            }
        }

        #[test]
        fn filter_keeps_at_least_one(seed in 0u64..500, n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ups: Vec<_> = (0..n)
                .map(|i| up(i, &(0..3).map(|_| rng.random_range(-1e3..1e3)).collect::<Vec<_>>()))
                .collect();
            let rule = RobustRule::DistanceFilter { k: 0.0 };
            prop_assert!(!agg(&ups, rule).kept.is_empty());
        }
    }
}
