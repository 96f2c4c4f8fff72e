//! Classical limit of the internal dynamics: an area-preserving kicked map on
//! the unit torus, its exact inverse, first-passage times to the interface
//! strip q in [0, strip_width), and box-counting dimension estimates of the
//! trapped sets.

use ndarray::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::stats::fit_line;
use crate::{Error, Result};

/// Sentinel for orbits that never reach the strip within t_max.
pub const NEVER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn label(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// Reduce to [0, 1); rem_euclid alone can round up to exactly 1.
fn wrap01(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    if y >= 1.0 {
        y - 1.0
    } else {
        y
    }
}

fn kick(q: f64, k: f64) -> f64 {
    k / (4.0 * PI) * (TAU * q).sin()
}

/// One forward step: q' = q + p + (k/4pi) sin(2pi q), then
/// p' = p + (k/4pi)[sin(2pi q) + sin(2pi q')], both mod 1.
pub fn classical_step(pt: PhasePoint, k: f64) -> PhasePoint {
    let aq = kick(pt.q, k);
    let q1 = wrap01(pt.q + pt.p + aq);
    let p1 = wrap01(pt.p + aq + kick(q1, k));
    PhasePoint { q: q1, p: p1 }
}

/// Exact closed-form inverse: q = q' - p' + (k/4pi) sin(2pi q'), then
/// p = p' - (k/4pi)[sin(2pi q) + sin(2pi q')], both mod 1.
pub fn classical_inverse(pt: PhasePoint, k: f64) -> PhasePoint {
    let aq1 = kick(pt.q, k);
    let q0 = wrap01(pt.q - pt.p + aq1);
    let p0 = wrap01(pt.p - kick(q0, k) - aq1);
    PhasePoint { q: q0, p: p0 }
}

/// First-passage times of cell-center orbits to the interface strip.
#[derive(Debug, Clone)]
pub struct PassageTimeGrid {
    pub n_q: usize,
    pub n_p: usize,
    pub strip_width: f64,
    pub t_max: u32,
    pub direction: Direction,
    /// (n_q, n_p) array of first-passage steps in {1, ..., t_max}, or NEVER.
    pub first_passage: Array2<u32>,
}

impl PassageTimeGrid {
    /// Fraction of cells never reaching the strip within t_max.
    pub fn trapped_fraction(&self) -> f64 {
        let never = self.first_passage.iter().filter(|&&t| t == NEVER).count();
        never as f64 / (self.n_q * self.n_p) as f64
    }

    /// Fraction of cells with first passage exactly t.
    pub fn fraction_with_time(&self, t: u32) -> f64 {
        let hits = self.first_passage.iter().filter(|&&x| x == t).count();
        hits as f64 / (self.n_q * self.n_p) as f64
    }
}

/// Iterate every cell center and record when its orbit first enters the
/// strip {q < strip_width}.  The backward direction uses the inverse map, so
/// a cell with passage time t lies in the t-th forward image of the strip.
/// Cells starting inside the strip are still assigned by their first return
/// at t >= 1.
pub fn coupled_regions(
    k: f64,
    strip_width: f64,
    t_max: u32,
    resolution: (usize, usize),
    direction: Direction,
) -> Result<PassageTimeGrid> {
    if !k.is_finite() {
        return Err(Error::InvalidParam(format!("kick strength must be finite, got {k}")));
    }
    if !(strip_width > 0.0 && strip_width < 1.0) {
        return Err(Error::InvalidParam(format!(
            "strip width must lie in (0, 1), got {strip_width}"
        )));
    }
    if t_max < 1 {
        return Err(Error::InvalidParam("time horizon must be >= 1".into()));
    }
    if t_max == NEVER {
        return Err(Error::InvalidParam("time horizon collides with the never-sentinel".into()));
    }
    let (n_q, n_p) = resolution;
    if n_q == 0 || n_p == 0 {
        return Err(Error::InvalidParam("grid resolution must be positive".into()));
    }

    let rows: Vec<Vec<u32>> = (0..n_q)
        .into_par_iter()
        .map(|iq| {
            let q0 = (iq as f64 + 0.5) / n_q as f64;
            (0..n_p)
                .map(|ip| {
                    let p0 = (ip as f64 + 0.5) / n_p as f64;
                    let mut pt = PhasePoint { q: q0, p: p0 };
                    let mut passage = NEVER;
                    for t in 1..=t_max {
                        pt = match direction {
                            Direction::Forward => classical_step(pt, k),
                            Direction::Backward => classical_inverse(pt, k),
                        };
                        if pt.q < strip_width {
                            passage = t;
                            break;
                        }
                    }
                    passage
                })
                .collect()
        })
        .collect();

    let mut first_passage = Array2::from_elem((n_q, n_p), NEVER);
    for (iq, row) in rows.into_iter().enumerate() {
        for (ip, t) in row.into_iter().enumerate() {
            first_passage[(iq, ip)] = t;
        }
    }

    Ok(PassageTimeGrid {
        n_q,
        n_p,
        strip_width,
        t_max,
        direction,
        first_passage,
    })
}

/// 1 on cells whose orbit never reached the strip: the resolution-t_max
/// approximation of the trapped set.
pub fn trapped_set_indicator(grid: &PassageTimeGrid) -> Array2<u8> {
    grid.first_passage.mapv(|t| u8::from(t == NEVER))
}

/// Box-counting dimension of an indicator grid: OLS slope of ln(occupied
/// boxes) against ln(1/box size).  Scales are box edge lengths in cells; each
/// must divide the grid resolution.
pub fn box_counting_dimension(indicator: &Array2<u8>, scales: &[usize]) -> Result<(f64, f64)> {
    let (rows, cols) = indicator.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyInput("empty indicator grid".into()));
    }
    if rows != cols {
        return Err(Error::DimensionMismatch(format!(
            "box counting expects a square grid, got {rows}x{cols}"
        )));
    }
    let mut sizes: Vec<usize> = scales.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InvalidParam(format!(
            "need at least 3 distinct box sizes, got {}",
            sizes.len()
        )));
    }
    for &s in &sizes {
        if s == 0 || rows % s != 0 {
            return Err(Error::InvalidParam(format!(
                "box size {s} does not divide the grid resolution {rows}"
            )));
        }
    }
    if indicator.iter().all(|&v| v == 0) {
        return Err(Error::EmptyInput(
            "indicator has no occupied cells; dimension undefined".into(),
        ));
    }

    let mut xs = Vec::with_capacity(sizes.len());
    let mut ys = Vec::with_capacity(sizes.len());
    for &s in &sizes {
        let per_side = rows / s;
        let mut occupied = 0usize;
        for bi in 0..per_side {
            for bj in 0..per_side {
                let block = indicator.slice(s![bi * s..(bi + 1) * s, bj * s..(bj + 1) * s]);
                if block.iter().any(|&v| v != 0) {
                    occupied += 1;
                }
            }
        }
        // box edge in torus units is s/rows; ln(1/size) = ln(rows/s)
        xs.push((rows as f64 / s as f64).ln());
        ys.push((occupied as f64).ln());
    }
    let fit = fit_line(&xs, &ys);
    Ok((fit.slope, fit.stderr_slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus_dist(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(1.0);
        d.min(1.0 - d)
    }

    fn point_dist(a: PhasePoint, b: PhasePoint) -> f64 {
        torus_dist(a.q, b.q).max(torus_dist(a.p, b.p))
    }

    #[test]
    fn free_rotation_examples() {
        let out = classical_step(PhasePoint { q: 0.25, p: 0.5 }, 0.0);
        assert!((out.q - 0.75).abs() < 1e-15);
        assert!((out.p - 0.5).abs() < 1e-15);

        // p = 0 is a line of fixed points at k = 0
        let fixed = classical_step(PhasePoint { q: 0.37, p: 0.0 }, 0.0);
        assert!((fixed.q - 0.37).abs() < 1e-15);
        assert_eq!(fixed.p, 0.0);

        let back = classical_inverse(PhasePoint { q: 0.75, p: 0.5 }, 0.0);
        assert!((back.q - 0.25).abs() < 1e-15);
    }

    #[test]
    fn step_and_inverse_are_mutual_inverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &k in &[0.0, 2.0, 8.0] {
            for _ in 0..10_000 {
                let pt = PhasePoint {
                    q: rng.random_range(0.0..1.0),
                    p: rng.random_range(0.0..1.0),
                };
                let round1 = classical_inverse(classical_step(pt, k), k);
                let round2 = classical_step(classical_inverse(pt, k), k);
                assert!(point_dist(round1, pt) < 1e-12, "k={k}, pt={pt:?}");
                assert!(point_dist(round2, pt) < 1e-12, "k={k}, pt={pt:?}");
            }
        }
    }

    #[test]
    fn one_step_jacobian_is_area_preserving() {
        // Central finite differences on the unwrapped step; wrap only shifts
        // by integers so the derivative is the same away from cell edges.
        let k = 8.0;
        let h = 1e-6;
        let step_raw = |q: f64, p: f64| {
            let aq = kick(q, k);
            let q1 = q + p + aq;
            let p1 = p + aq + kick(q1, k);
            (q1, p1)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let q = rng.random_range(0.0..1.0);
            let p = rng.random_range(0.0..1.0);
            let (qp, pp) = step_raw(q + h, p);
            let (qm, pm) = step_raw(q - h, p);
            let dq_dq = (qp - qm) / (2.0 * h);
            let dp_dq = (pp - pm) / (2.0 * h);
            let (qp2, pp2) = step_raw(q, p + h);
            let (qm2, pm2) = step_raw(q, p - h);
            let dq_dp = (qp2 - qm2) / (2.0 * h);
            let dp_dp = (pp2 - pm2) / (2.0 * h);
            let det = dq_dq * dp_dp - dq_dp * dp_dq;
            assert!((det - 1.0).abs() < 1e-6, "det = {det} at ({q}, {p})");
        }
    }

    #[test]
    fn integrable_backward_passage_matches_closed_form() {
        // k = 0: after t inverse steps the position is q - t p, an exact
        // rational (2(iq - t ip) + 1 - t) / 2n on cell centers.  Cells whose
        // undecided orbit lands exactly on the wrap point are skipped; there
        // the rounded iteration may legitimately fall on either side.
        let w = 0.21;
        let t_max = 6;
        let n = 40usize;
        let den = 2 * n as i64;
        let cutoff = (w * den as f64).floor() as i64; // no tie: w*2n is not an integer
        let grid = coupled_regions(0.0, w, t_max, (n, n), Direction::Backward).unwrap();
        let mut ambiguous = 0;
        for iq in 0..n {
            for ip in 0..n {
                let mut expected = Some(NEVER);
                for t in 1..=t_max as i64 {
                    let s = (2 * (iq as i64 - t * ip as i64) + 1 - t).rem_euclid(den);
                    if s == 0 {
                        expected = None;
                        break;
                    }
                    if s <= cutoff {
                        expected = Some(t as u32);
                        break;
                    }
                }
                match expected {
                    Some(t) => assert_eq!(
                        grid.first_passage[(iq, ip)],
                        t,
                        "cell ({iq}, {ip})"
                    ),
                    None => ambiguous += 1,
                }
            }
        }
        assert!(ambiguous < n * n / 10, "{ambiguous} ambiguous cells");
    }

    #[test]
    fn one_step_strip_image_preserves_area() {
        for direction in [Direction::Backward, Direction::Forward] {
            let grid = coupled_regions(8.0, 0.2, 1, (1000, 1000), direction).unwrap();
            let frac = grid.fraction_with_time(1);
            assert!(
                (0.19..=0.21).contains(&frac),
                "{} one-step fraction {frac}",
                direction.label()
            );
        }
    }

    #[test]
    fn coupled_cells_nest_as_horizon_grows() {
        let mut prev_trapped = 1.0;
        for t_max in 1..=8 {
            let grid = coupled_regions(8.0, 0.2, t_max, (300, 300), Direction::Backward).unwrap();
            let trapped = grid.trapped_fraction();
            assert!(
                trapped <= prev_trapped + 1e-12,
                "trapped fraction grew at t_max={t_max}"
            );
            prev_trapped = trapped;
        }
    }

    #[test]
    fn trapped_mass_decays_like_escape_rate() {
        // Roughly (1 - w)^t for a strongly chaotic map; checked as a trend.
        let g4 = coupled_regions(8.0, 0.2, 4, (500, 500), Direction::Backward).unwrap();
        let g8 = coupled_regions(8.0, 0.2, 8, (500, 500), Direction::Backward).unwrap();
        let ratio = g8.trapped_fraction() / g4.trapped_fraction();
        assert!(
            (0.2..=0.75).contains(&ratio),
            "expected roughly 0.8^4 = 0.41, got {ratio}"
        );
    }

    #[test]
    fn full_strip_empties_after_one_step() {
        let grid = coupled_regions(8.0, 0.999, 3, (50, 50), Direction::Backward).unwrap();
        let ind = trapped_set_indicator(&grid);
        let occupied: u32 = ind.iter().map(|&v| v as u32).sum();
        assert_eq!(occupied, 0);
    }

    #[test]
    fn forward_and_backward_indicators_mirror_in_momentum() {
        // The inverse map is conjugate to the forward map by (q, p) -> (q, -p),
        // so trapped sets mirror cell-for-cell up to boundary effects.
        let n = 200;
        let fwd = coupled_regions(8.0, 0.2, 10, (n, n), Direction::Forward).unwrap();
        let bwd = coupled_regions(8.0, 0.2, 10, (n, n), Direction::Backward).unwrap();
        let fi = trapped_set_indicator(&fwd);
        let bi = trapped_set_indicator(&bwd);
        let mut mismatched = 0usize;
        for iq in 0..n {
            for ip in 0..n {
                if fi[(iq, ip)] != bi[(iq, n - 1 - ip)] {
                    mismatched += 1;
                }
            }
        }
        assert!(
            (mismatched as f64) < 0.02 * (n * n) as f64,
            "{mismatched} mismatched cells"
        );
    }

    #[test]
    fn box_counting_trivial_sets() {
        let full = Array2::from_elem((200, 200), 1u8);
        let (dim, err) = box_counting_dimension(&full, &[1, 2, 4, 5, 10, 20, 25]).unwrap();
        assert!((dim - 2.0).abs() < 0.01, "full grid dim {dim}");
        assert!(err < 1e-12);

        let mut line = Array2::zeros((256, 256));
        for i in 0..256 {
            line[(i, i)] = 1u8;
        }
        let (dim, _) = box_counting_dimension(&line, &[1, 2, 4, 8, 16, 32]).unwrap();
        assert!((dim - 1.0).abs() < 0.05, "line dim {dim}");

        let mut single = Array2::zeros((64, 64));
        single[(10, 20)] = 1u8;
        let (dim, _) = box_counting_dimension(&single, &[1, 2, 4, 8]).unwrap();
        assert!(dim.abs() < 0.05, "single cell dim {dim}");
    }

    #[test]
    fn box_counting_rejects_bad_input() {
        let grid = Array2::from_elem((100, 100), 1u8);
        assert!(box_counting_dimension(&grid, &[1, 2]).is_err());
        assert!(box_counting_dimension(&grid, &[1, 2, 3]).is_err());
        let empty = Array2::zeros((100, 100));
        assert!(box_counting_dimension(&empty, &[1, 2, 5]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn round_trip_property(q in 0.0f64..1.0, p in 0.0f64..1.0, k in 0.0f64..10.0) {
            let pt = PhasePoint { q, p };
            let fwd = classical_inverse(classical_step(pt, k), k);
            prop_assert!(point_dist(fwd, pt) < 1e-12);
        }

        #[test]
        fn step_stays_on_torus(q in 0.0f64..1.0, p in 0.0f64..1.0, k in 0.0f64..10.0) {
            let out = classical_step(PhasePoint { q, p }, k);
            prop_assert!((0.0..1.0).contains(&out.q));
            prop_assert!((0.0..1.0).contains(&out.p));
        }
    }
}
