use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::survival::{HazardModel, TimeGrid};

/// Predicted survival curves on a time grid, read as right-continuous steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSurvival {
    grid: TimeGrid,
    /// `curves[i][l]` is `S_l` for subject `i`, with `S_0 = 1`.
    curves: Vec<Vec<f64>>,
}

impl PredictedSurvival {
    /// `curves[i]` holds `S_1..S_T`.
    pub fn new(grid: TimeGrid, curves: Vec<Vec<f64>>) -> Result<Self> {
        let t = grid.intervals();
        let curves = curves
            .into_iter()
            .map(|c| {
                if c.len() != t {
                    return Err(Error::DimensionMismatch {
                        expected: t,
                        actual: c.len(),
                    });
                }
                let mut full = Vec::with_capacity(t + 1);
                full.push(1.0);
                full.extend(c);
                Ok(full)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, curves })
    }

    pub fn from_model(model: &HazardModel, grid: &TimeGrid, xs: &[&[f64]], exec: Execution) -> Result<Self> {
        if model.output_dim() != grid.intervals() {
            return Err(Error::DimensionMismatch {
                expected: grid.intervals(),
                actual: model.output_dim(),
            });
        }
        Self::new(grid.clone(), model.predict_survival(xs, exec)?)
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `S_0..S_T` of subject `i`.
    pub fn curve(&self, i: usize) -> &[f64] {
        &self.curves[i]
    }

    pub fn at(&self, i: usize, t: f64) -> f64 {
        self.curves[i][self.grid.steps_at(t)]
    }

    /// Subset of subjects by index.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            grid: self.grid.clone(),
            curves: idx.iter().map(|&i| self.curves[i].clone()).collect(),
        }
    }
}

/// Concordant, tied and admissible pair counts at one horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairCounts {
    pub concordant: u64,
    pub tied: u64,
    pub admissible: u64,
}

impl PairCounts {
    /// `None` when there are no admissible pairs.
    pub fn c_index(&self) -> Option<f64> {
        (self.admissible > 0).then(|| (self.concordant as f64 + 0.5 * self.tied as f64) / self.admissible as f64)
    }
}

fn check(pred: &PredictedSurvival, times: &[f64], events: &[bool]) -> Result<()> {
    super::km::check_lengths(times, events)?;
    if pred.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            actual: pred.len(),
        });
    }
    Ok(())
}

/// Time-dependent C-index at `t_star` by direct enumeration of all pairs.
pub fn c_index_brute_force(t_star: f64, pred: &PredictedSurvival, times: &[f64], events: &[bool]) -> Result<Option<f64>> {
    check(pred, times, events)?;
    let mut c = PairCounts::default();
    for i in 0..times.len() {
        if !(events[i] && times[i] <= t_star) {
            continue;
        }
        let si = pred.at(i, times[i]);
        for j in 0..times.len() {
            if times[j] > times[i] {
                let sj = pred.at(j, times[i]);
                c.admissible += 1;
                if si < sj {
                    c.concordant += 1;
                } else if si == sj {
                    c.tied += 1;
                }
            }
        }
    }
    Ok(c.c_index())
}

/// Time-dependent C-index at `t_star`: over pairs where `i` has an event by
/// `t_star` and `T_j > T_i`, the share with `S(T_i | x_i) < S(T_i | x_j)`,
/// ties counting one half.
pub fn c_index_at(t_star: f64, pred: &PredictedSurvival, times: &[f64], events: &[bool]) -> Result<Option<f64>> {
    Ok(pair_counts(&[t_star], pred, times, events, Execution::Sequential)?[0].c_index())
}

/// Pair counts at each horizon, `O(T n log n)` overall.
pub fn pair_counts(
    horizons: &[f64],
    pred: &PredictedSurvival,
    times: &[f64],
    events: &[bool],
    exec: Execution,
) -> Result<Vec<PairCounts>> {
    check(pred, times, events)?;
    let n = times.len();
    let grid = pred.grid();
    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    // Every subject with an event only compares on the curve column of its own time.
    let mut steps: Vec<usize> = (0..n).filter(|&i| events[i]).map(|i| grid.steps_at(times[i])).collect();
    steps.sort_unstable();
    steps.dedup();

    let per_step = exec.map(&steps, |&k| {
        let col: Vec<f64> = (0..n).map(|j| pred.curve(j)[k]).collect();
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let rank = |v: f64| sorted.partition_point(|&s| s < v);
        let mut tree = Fenwick::new(sorted.len());
        let mut out = Vec::new();
        let mut inserted = 0u64;
        let mut a = 0;
        while a < n {
            let t = times[by_time[a]];
            let mut b = a;
            while b < n && times[by_time[b]] == t {
                b += 1;
            }
            for &i in &by_time[a..b] {
                if events[i] && grid.steps_at(times[i]) == k {
                    let r = rank(col[i]);
                    let at_most = tree.prefix(r + 1);
                    let below = tree.prefix(r);
                    let tied = at_most - below;
                    out.push((
                        i,
                        PairCounts {
                            concordant: inserted - at_most,
                            tied,
                            admissible: inserted,
                        },
                    ));
                }
            }
            for &j in &by_time[a..b] {
                tree.add(rank(col[j]));
                inserted += 1;
            }
            a = b;
        }
        out
    });

    let mut contributions: Vec<(f64, PairCounts)> = per_step
        .into_iter()
        .flatten()
        .map(|(i, c)| (times[i], c))
        .collect();
    contributions.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(horizons
        .iter()
        .map(|&h| {
            let mut total = PairCounts::default();
            for (_, c) in contributions.iter().take_while(|(t, _)| *t <= h) {
                total.concordant += c.concordant;
                total.tied += c.tied;
                total.admissible += c.admissible;
            }
            total
        })
        .collect())
}

/// Mean of the defined per-horizon C-indices and the number left undefined.
pub fn mean_c_index(
    horizons: &[f64],
    pred: &PredictedSurvival,
    times: &[f64],
    events: &[bool],
    exec: Execution,
) -> Result<(Option<f64>, usize)> {
    let values: Vec<Option<f64>> = pair_counts(horizons, pred, times, events, exec)?
        .iter()
        .map(PairCounts::c_index)
        .collect();
    Ok(mean_defined(&values))
}

pub(crate) fn mean_defined(values: &[Option<f64>]) -> (Option<f64>, usize) {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let undefined = values.len() - defined.len();
    if undefined > 0 {
        log::warn!("{undefined} horizon(s) without admissible pairs excluded from the mean C-index");
    }
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    (mean, undefined)
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn prefix(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn grid() -> TimeGrid {
        TimeGrid::monthly(4).unwrap()
    }

    #[test]
    fn perfect_and_constant() {
        let times = [1.5, 2.5, 3.5, 3.9];
        let events = [true, true, false, false];
        let good = PredictedSurvival::new(
            grid(),
            vec![
                vec![0.5, 0.4, 0.3, 0.2],
                vec![0.9, 0.6, 0.5, 0.4],
                vec![0.95, 0.9, 0.8, 0.7],
                vec![0.99, 0.95, 0.9, 0.85],
            ],
        )
        .unwrap();
        assert_eq!(c_index_at(4.0, &good, &times, &events).unwrap(), Some(1.0));
        let flat = PredictedSurvival::new(grid(), vec![vec![0.5; 4]; 4]).unwrap();
        assert_eq!(c_index_at(4.0, &flat, &times, &events).unwrap(), Some(0.5));
        assert_eq!(c_index_at(1.0, &flat, &times, &events).unwrap(), None);
    }

    #[test]
    fn fast_matches_brute_force() {
        let mut rng = stream(&[11]);
        for _ in 0..30 {
            let n = rng.random_range(2..50);
            let times: Vec<f64> = (0..n).map(|_| (rng.random_range(0..16) as f64) / 4.0).collect();
            let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
            let curves: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let mut s = 1.0;
                    (0..4)
                        .map(|_| {
                            s *= 1.0 - (rng.random_range(0..5) as f64) / 10.0;
                            s
                        })
                        .collect()
                })
                .collect();
            let pred = PredictedSurvival::new(grid(), curves).unwrap();
            let hs = [1.0, 2.0, 3.0, 4.0];
            let fast = pair_counts(&hs, &pred, &times, &events, Execution::Parallel).unwrap();
            for (h, c) in hs.iter().zip(&fast) {
                assert_eq!(c.c_index(), c_index_brute_force(*h, &pred, &times, &events).unwrap());
            }
        }
    }
}
