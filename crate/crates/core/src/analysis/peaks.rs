//! Peak picking on 2D maps and population-time traces at fixed coordinates.

use crate::error::{Error, Result};
use crate::spectra::SpectrumMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak2D {
    pub omega1: f64,
    pub omega3: f64,
    pub amplitude: f64,
    pub is_diagonal: bool,
}

/// Offset and value of the stationary point of a least-squares quadratic
/// over the 3×3 patch `f[dy+1][dx+1]`. None when the patch is not a
/// maximum or the vertex lies outside it.
pub fn refine_3x3(f: &[[f64; 3]; 3]) -> Option<(f64, f64, f64)> {
    let (mut s, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, row) in f.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let (x, y) = (c as f64 - 1.0, r as f64 - 1.0);
            s += v;
            sx += x * v;
            sy += y * v;
            sxx += (x * x - 2.0 / 3.0) * v;
            syy += (y * y - 2.0 / 3.0) * v;
            sxy += x * y * v;
        }
    }
    let (b, c) = (sx / 6.0, sy / 6.0);
    let (d, e, g) = (sxx / 2.0, sxy / 4.0, syy / 2.0);
    let a = s / 9.0 - 2.0 / 3.0 * (d + g);
    // maximum needs a negative-definite Hessian [[2d, e], [e, 2g]]
    let det = 4.0 * d * g - e * e;
    if !(d < 0.0 && det > 0.0) {
        return None;
    }
    let dx = (-2.0 * g * b + e * c) / det;
    let dy = (-2.0 * d * c + e * b) / det;
    if dx.abs() > 1.0 || dy.abs() > 1.0 {
        return None;
    }
    let val = a + b * dx + c * dy + d * dx * dx + e * dx * dy + g * dy * dy;
    Some((dx, dy, val))
}

/// Interior local maxima of the map's real display values above
/// `threshold_frac` of the global maximum, refined to sub-bin precision and
/// sorted by amplitude (largest first).
pub fn find_peaks(map: &SpectrumMap, threshold_frac: f64, diag_tol: f64) -> Result<Vec<Peak2D>> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::Domain(format!("threshold fraction must be in (0, 1), got {threshold_frac}")));
    }
    let v = map.real_values();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("map contains non-finite values".into()));
    }
    let (n1, n3) = (map.n1(), map.n3());
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::new();
    if n1 < 3 || n3 < 3 || !(top > 0.0) {
        return Ok(out);
    }
    let thr = threshold_frac * top;
    let d1 = map.omega1[1] - map.omega1[0];
    let d3 = map.omega3[1] - map.omega3[0];
    for i in 1..n1 - 1 {
        for j in 1..n3 - 1 {
            let c = v[i * n3 + j];
            if c <= thr {
                continue;
            }
            // strict against earlier neighbours, non-strict against later
            // ones, so a plateau yields a single peak
            let mut is_max = true;
            let mut patch = [[0.0; 3]; 3];
            for di in 0..3 {
                for dj in 0..3 {
                    let w = v[(i + di - 1) * n3 + (j + dj - 1)];
                    patch[dj][di] = w;
                    if (di, dj) == (1, 1) {
                        continue;
                    }
                    let earlier = di < 1 || (di == 1 && dj < 1);
                    if (earlier && w >= c) || (!earlier && w > c) {
                        is_max = false;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let (o1, o3, amp) = match refine_3x3(&patch) {
                Some((dx, dy, val)) => (map.omega1[i] + dx * d1, map.omega3[j] + dy * d3, val),
                None => (map.omega1[i], map.omega3[j], c),
            };
            out.push(Peak2D { omega1: o1, omega3: o3, amplitude: amp, is_diagonal: (o1 - o3).abs() <= diag_tol });
        }
    }
    out.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    Ok(out)
}

/// Population-time trace at a fixed (Ω1, Ω3).
#[derive(Debug, Clone, PartialEq)]
pub struct T2Trace {
    pub t2: Vec<f64>,
    pub values: Vec<f64>,
}

impl T2Trace {
    pub fn new(t2: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t2.len() != values.len() {
            return Err(Error::Grid(format!("trace has {} times but {} values", t2.len(), values.len())));
        }
        if t2.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("trace times must be strictly ascending".into()));
        }
        Ok(T2Trace { t2, values })
    }

    pub fn len(&self) -> usize {
        self.t2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t2.is_empty()
    }

    /// Uniform spacing, or an error if the times are not equally spaced.
    pub fn spacing(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::Grid("trace needs at least two points".into()));
        }
        let dt = (self.t2[self.len() - 1] - self.t2[0]) / (self.len() - 1) as f64;
        if self.t2.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0)) {
            return Err(Error::Grid("trace times are not uniformly spaced".into()));
        }
        Ok(dt)
    }
}

fn locate(axis: &[f64], x: f64, what: &str) -> Result<(usize, f64)> {
    let n = axis.len();
    if n < 2 || !(x >= axis[0] && x <= axis[n - 1]) {
        return Err(Error::Range(format!(
            "{what} = {x} meV outside the map axis [{}, {}]",
            axis.first().copied().unwrap_or(f64::NAN),
            axis.last().copied().unwrap_or(f64::NAN)
        )));
    }
    let mut k = (((x - axis[0]) / (axis[1] - axis[0])).floor().max(0.0) as usize).min(n - 2);
    while k > 0 && x < axis[k] {
        k -= 1;
    }
    while k < n - 2 && x >= axis[k + 1] {
        k += 1;
    }
    Ok((k, (x - axis[k]) / (axis[k + 1] - axis[k])))
}

/// Bilinear interpolation of one map's real values.
pub fn interpolate(map: &SpectrumMap, omega1: f64, omega3: f64) -> Result<f64> {
    let (i, fx) = locate(&map.omega1, omega1, "omega1")?;
    let (j, fy) = locate(&map.omega3, omega3, "omega3")?;
    let v = |a: usize, b: usize| map.real_at(a, b);
    let mut acc = (1.0 - fx) * (1.0 - fy) * v(i, j);
    if fx != 0.0 {
        acc += fx * (1.0 - fy) * v(i + 1, j);
    }
    if fy != 0.0 {
        acc += (1.0 - fx) * fy * v(i, j + 1);
    }
    if fx != 0.0 && fy != 0.0 {
        acc += fx * fy * v(i + 1, j + 1);
    }
    Ok(acc)
}

pub fn extract_trace(maps: &[SpectrumMap], omega1: f64, omega3: f64) -> Result<T2Trace> {
    let Some(first) = maps.first() else {
        return Err(Error::Grid("no maps given".into()));
    };
    if maps.iter().any(|m| m.omega1 != first.omega1 || m.omega3 != first.omega3) {
        return Err(Error::Grid("maps do not share frequency grids".into()));
    }
    let values = maps.iter().map(|m| interpolate(m, omega1, omega3)).collect::<Result<Vec<_>>>()?;
    T2Trace::new(maps.iter().map(|m| m.t2).collect(), values)
}
