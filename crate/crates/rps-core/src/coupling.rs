//! Concave comparison function φ for reflection coupling.
//!
//! φ is defined through the piecewise-linear rate
//! `γ(v) = (K₁+K₂)v·1_{0≤v≤L} − K₂v` by
//!
//! ```text
//! φ′(u) = e^{−∫₀^u γ} ∫_u^∞ l e^{∫₀^l γ} dl,    φ(r) = ∫₀^r φ′(u) du,
//! ```
//!
//! which solves φ″ + γφ′ = −r with φ(0) = 0. Beyond L the inner integrand is
//! a Gaussian tail and φ′ is identically 1/K₂, so the table is built by
//! cell-wise Gauss–Legendre quadrature accumulated backwards from an
//! analytically chosen truncation radius, and extended linearly with slope
//! 1/K₂ past the table horizon.

use crate::error::{Error, Result};
use crate::rates::golden_max;

/// Finite-difference step used by [`CouplingMetric::ode_residual`].
pub const H_FD: f64 = 1e-4;

/// Relative mass allowed in the dropped improper tail.
const TAIL_RELATIVE_MASS: f64 = 1e-12;

/// γ(v): expansion rate K₁v inside radius L, contraction −K₂v beyond.
pub fn gamma(v: f64, k1: f64, k2: f64, l: f64) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::Domain(format!("gamma needs v >= 0, got {v}")));
    }
    Ok(gamma_unchecked(v, k1, k2, l))
}

#[inline]
fn gamma_unchecked(v: f64, k1: f64, k2: f64, l: f64) -> f64 {
    if v <= l {
        (k1 + k2) * v - k2 * v
    } else {
        -k2 * v
    }
}

/// ∫₀^r γ(v) dv, exactly.
#[inline]
fn gamma_integral(r: f64, k1: f64, k2: f64, l: f64) -> f64 {
    if r <= l {
        0.5 * k1 * r * r
    } else {
        0.5 * k1 * l * l - 0.5 * k2 * (r * r - l * l)
    }
}

/// Inner integrand l·e^{∫₀^l γ}.
#[inline]
fn inner_weight(l_val: f64, k1: f64, k2: f64, l: f64) -> f64 {
    l_val * gamma_integral(l_val, k1, k2, l).exp()
}

/// Table construction options.
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Lower bound on the table horizon; the horizon is max(floor, L, 1).
    pub r_max_floor: f64,
    /// Target node spacing of the radius grid.
    pub grid_step: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { r_max_floor: 0.0, grid_step: 2e-4 }
    }
}

impl BuildOptions {
    pub fn with_horizon(r_max_floor: f64) -> Self {
        Self { r_max_floor, ..Self::default() }
    }
}

/// Tabulated φ with its sandwich constants.
#[derive(Debug, Clone)]
pub struct CouplingMetric {
    k1: f64,
    k2: f64,
    l: f64,
    r_max: f64,
    grid: Vec<f64>,
    phi_values: Vec<f64>,
    phi_prime_values: Vec<f64>,
    phi_slopes: Vec<f64>,
    phi_prime_slopes: Vec<f64>,
    c_star: f64,
    c_upper_star: f64,
    tail_slope: f64,
}

impl CouplingMetric {
    /// Builds the φ table for the given dissipativity parameters.
    pub fn build(k1: f64, k2: f64, l: f64, opts: BuildOptions) -> Result<Self> {
        if !(k2 > 0.0) {
            return Err(Error::Config(format!("K2 must be > 0, got {k2}")));
        }
        if k1 < 0.0 || l < 0.0 {
            return Err(Error::Config(format!("K1, L must be >= 0 (got {k1}, {l})")));
        }
        if !(opts.grid_step > 0.0) {
            return Err(Error::Config("grid step must be positive".into()));
        }

        // φ′ settles at 1/K₂ at radius L; keep at least a unit of table no
        // matter how small L is.
        let r_max = opts.r_max_floor.max(l).max(1.0);

        // Truncation: beyond L the tail mass from x is e^{C0}e^{-K2 x^2/2}/K2
        // with C0 = (K1+K2)L²/2; requiring relative mass TAIL_RELATIVE_MASS
        // against the smallest inner integral used (at r_max) gives
        // x² = max(L, r_max)² + 2 ln(1/mass)/K₂, then doubled.
        let ln_inv_mass = -TAIL_RELATIVE_MASS.ln();
        let l_cut = 2.0 * (r_max.max(l).powi(2) + 2.0 * ln_inv_mass / k2).sqrt();

        // Radius grid: uniform with L forced in as a node (the integrand has
        // a kink there), extended to l_cut for the backward accumulation.
        let n_table = ((r_max / opts.grid_step).ceil() as usize).max(8);
        let step = r_max / n_table as f64;
        let mut grid: Vec<f64> = (0..=n_table).map(|i| i as f64 * step).collect();
        if l > 0.0 && l < r_max {
            let pos = grid.partition_point(|&x| x < l);
            if (grid[pos] - l).abs() > 1e-12 && (grid[pos - 1] - l).abs() > 1e-12 {
                grid.insert(pos, l);
            }
        }
        let n_ext = (((l_cut - r_max) / step).ceil() as usize).max(1);
        let ext_step = (l_cut - r_max) / n_ext as f64;
        let mut full: Vec<f64> = grid.clone();
        for i in 1..=n_ext {
            full.push(r_max + i as f64 * ext_step);
        }

        // Backward accumulation of J(r_i) = ∫_{r_i}^{l_cut} l e^{∫γ} dl.
        let w = |x: f64| inner_weight(x, k1, k2, l);
        let m = full.len();
        let mut inner = vec![0.0_f64; m];
        for i in (0..m - 1).rev() {
            inner[i] = inner[i + 1] + gauss4(&w, full[i], full[i + 1]);
        }

        let nt = grid.len();
        let mut phi_prime = vec![0.0_f64; nt];
        for i in 0..nt {
            phi_prime[i] = (-gamma_integral(grid[i], k1, k2, l)).exp() * inner[i];
        }

        // φ by cumulative Simpson; midpoint values of φ′ come from the same
        // backward accumulation so the cell rule is O(step⁴).
        let mut phi = vec![0.0_f64; nt];
        for i in 0..nt - 1 {
            let (a, b) = (grid[i], grid[i + 1]);
            let mid = 0.5 * (a + b);
            let j_mid = inner[i + 1] + gauss4(&w, mid, b);
            let pp_mid = (-gamma_integral(mid, k1, k2, l)).exp() * j_mid;
            phi[i + 1] = phi[i] + (b - a) / 6.0 * (phi_prime[i] + 4.0 * pp_mid + phi_prime[i + 1]);
        }

        if phi_prime.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "phi' table is not strictly positive (K1={k1}, K2={k2}, L={l}, r_max={r_max})"
            )));
        }
        if phi.windows(2).any(|wd| !(wd[1] > wd[0])) {
            return Err(Error::Numeric("phi table is not strictly increasing".into()));
        }

        let tail_slope = 1.0 / k2;
        if (phi_prime[nt - 1] - tail_slope).abs() >= 1e-6 {
            return Err(Error::Numeric(format!(
                "phi'({r_max}) = {} has not settled at 1/K2 = {tail_slope}",
                phi_prime[nt - 1]
            )));
        }

        // Sandwich constants from the table extrema, refined by golden
        // section on the continuous φ′ to bracket width 1e-8.
        let raw = |u: f64| -> f64 {
            let idx = full.partition_point(|&x| x < u).min(m - 1);
            let j = inner[idx] + gauss4(&w, u, full[idx]);
            (-gamma_integral(u, k1, k2, l)).exp() * j
        };
        let (imin, imax) = extrema_indices(&phi_prime);
        let bracket = |i: usize| {
            let lo = if i == 0 { grid[0] } else { grid[i - 1] };
            let hi = if i + 1 < nt { grid[i + 1] } else { grid[nt - 1] };
            (lo, hi)
        };
        let (lo, hi) = bracket(imin);
        let (_, neg_min) = golden_max(&|u| -raw(u), lo, hi, 1e-8);
        let c_star = phi_prime[imin].min(-neg_min).min(tail_slope);
        let (lo, hi) = bracket(imax);
        let (_, max_ref) = golden_max(&raw, lo, hi, 1e-8);
        let c_upper_star = phi_prime[imax].max(max_ref).max(tail_slope);

        let phi_slopes = pchip_slopes(&grid, &phi);
        let phi_prime_slopes = pchip_slopes(&grid, &phi_prime);

        Ok(Self {
            k1,
            k2,
            l,
            r_max,
            grid,
            phi_values: phi,
            phi_prime_values: phi_prime,
            phi_slopes,
            phi_prime_slopes,
            c_star,
            c_upper_star,
            tail_slope,
        })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn phi_values(&self) -> &[f64] {
        &self.phi_values
    }
    pub fn phi_prime_values(&self) -> &[f64] {
        &self.phi_prime_values
    }
    /// inf φ′.
    pub fn c_star(&self) -> f64 {
        self.c_star
    }
    /// sup φ′.
    pub fn c_upper_star(&self) -> f64 {
        self.c_upper_star
    }
    /// Asymptotic slope 1/K₂ used beyond the table horizon.
    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    /// φ(r) by monotone-cubic interpolation, linear with slope 1/K₂ beyond
    /// the table horizon.
    pub fn phi(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::Domain(format!("phi needs r >= 0, got {r}")));
        }
        if r > self.r_max {
            return Ok(self.phi_values[self.phi_values.len() - 1] + self.tail_slope * (r - self.r_max));
        }
        Ok(pchip_eval(&self.grid, &self.phi_values, &self.phi_slopes, r))
    }

    /// φ′(r), interpolated inside the table and 1/K₂ beyond it.
    pub fn phi_prime(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::Domain(format!("phi' needs r >= 0, got {r}")));
        }
        if r > self.r_max {
            return Ok(self.tail_slope);
        }
        Ok(pchip_eval(&self.grid, &self.phi_prime_values, &self.phi_prime_slopes, r))
    }

    /// Max over `radii` of |φ″(r) + γ(r)φ′(r) + r|, with φ″ by central finite
    /// difference of the tabulated φ′ at step [`H_FD`]. Radii must stay out of
    /// the ±H_FD neighbourhood of the kink at r = L; an empty grid returns 0.
    pub fn ode_residual(&self, radii: &[f64]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for &r in radii {
            if r <= H_FD {
                return Err(Error::Domain(format!("residual radius {r} too close to 0")));
            }
            if (r - self.l).abs() <= H_FD {
                return Err(Error::Domain(format!(
                    "residual radius {r} is within {H_FD} of the kink at L = {}",
                    self.l
                )));
            }
            let up = self.phi_prime(r + H_FD)?;
            let down = self.phi_prime(r - H_FD)?;
            let second = (up - down) / (2.0 * H_FD);
            let g = gamma_unchecked(r, self.k1, self.k2, self.l);
            let residual = (second + g * self.phi_prime(r)? + r).abs();
            worst = worst.max(residual);
        }
        Ok(worst)
    }
}

fn extrema_indices(values: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[imin] {
            imin = i;
        }
        if v > values[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// 4-point Gauss–Legendre on [a, b].
fn gauss4<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    const X: [f64; 2] = [0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
    const W: [f64; 2] = [0.652_145_154_862_546_2, 0.347_854_845_137_453_86];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..2 {
        acc += W[i] * (f(c - h * X[i]) + f(c + h * X[i]));
    }
    acc * h
}

/// Fritsch–Carlson monotone cubic slopes on a strictly increasing grid.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0_f64; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            // Weighted harmonic mean preserves monotone data.
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    // Clamp endpoint slopes (standard PCHIP treatment).
    if d[0] != 0.0 {
        if m[0] * d[0] < 0.0 {
            m[0] = 0.0;
        } else if m[0].abs() > 3.0 * d[0].abs() {
            m[0] = 3.0 * d[0];
        }
    }
    if d[n - 2] != 0.0 {
        if m[n - 1] * d[n - 2] < 0.0 {
            m[n - 1] = 0.0;
        } else if m[n - 1].abs() > 3.0 * d[n - 2].abs() {
            m[n - 1] = 3.0 * d[n - 2];
        }
    }
    m
}

/// Cubic Hermite evaluation against precomputed slopes.
fn pchip_eval(x: &[f64], y: &[f64], m: &[f64], at: f64) -> f64 {
    let n = x.len();
    if at <= x[0] {
        return y[0];
    }
    if at >= x[n - 1] {
        return y[n - 1];
    }
    let i = x.partition_point(|&v| v <= at) - 1;
    let h = x[i + 1] - x[i];
    let t = (at - x[i]) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y[i] + h10 * h * m[i] + h01 * y[i + 1] + h11 * h * m[i + 1]
}
