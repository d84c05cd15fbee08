//! Analytic bounds on the boundary non-crossing probability and their
//! assembly into a reconciliation report.
//!
//! With `theta = Phi^-1(psi(u; 0))` and the projections `h_under` (minimal
//! majorant) and `h_over` (minimal-norm minorant) of the trend:
//!
//! * shift bounds: `Phi(theta - ||h_under||) <= psi(u;h) <= Phi(theta + ||h_over||)`;
//! * difference bounds: `|psi(u;h) - psi(u;0)|` within `||.|| / sqrt(2 pi)`;
//! * exponential bounds: `psi(u;h) <= psi(u; h - h_under) exp(-||h_under||^2/2 + int u d(h_under''))`
//!   and the band-probability lower mirror with `l` in place of `u`;
//! * a boundary-at-zero bound `psi(u;0) <= inf Phi(int u d(h_under'') / ||h_under||)`
//!   over candidate trends;
//! * product-form specialisations when trend and boundary factorize.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::McEstimate;
use crate::grid::{
    corner_combination, mixed_second_diff, stieltjes_integral_1d, stieltjes_integral_2d,
    GridFn1D, GridFn2D, DEFAULT_SOLVER_TOL,
};
use crate::majorant::{
    least_concave_majorant, product_majorant, project_polar_cone, verify_projection,
    ProjectionResult, DEFAULT_MAX_ITER,
};
use crate::trends;

// --- standard normal distribution -----------------------------------------

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, via Cody's rational erfc
/// approximations (absolute error below 1e-14 everywhere).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Complementary error function, W. J. Cody's three-regime rational scheme.
fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf_small(x);
    }
    let v = if y <= 4.0 { erfc_mid(y) } else { erfc_far(y) };
    if x < 0.0 {
        2.0 - v
    } else {
        v
    }
}

/// erf on |x| <= 0.46875.
#[allow(clippy::excessive_precision)] // published coefficient tables
fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.161_123_743_870_565_6e0,
        1.138_641_541_510_501_56e2,
        3.774_852_376_853_020_2e2,
        3.209_377_589_138_469_47e3,
        1.857_777_061_846_031_53e-1,
    ];
    const B: [f64; 4] = [
        2.360_129_095_234_412_09e1,
        2.440_246_379_344_441_73e2,
        1.282_616_526_077_372_28e3,
        2.844_236_833_439_170_62e3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

/// exp(-y^2) computed with the split-argument trick for full precision.
fn exp_msq(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// erfc on 0.46875 < y <= 4.
#[allow(clippy::excessive_precision)] // published coefficient tables
fn erfc_mid(y: f64) -> f64 {
    const C: [f64; 9] = [
        5.641_884_969_886_700_9e-1,
        8.883_149_794_388_375_94e0,
        6.611_919_063_714_162_95e1,
        2.986_351_381_974_001_31e2,
        8.819_522_212_417_690_9e2,
        1.712_047_612_634_070_58e3,
        2.051_078_377_826_071_47e3,
        1.230_339_354_797_997_25e3,
        2.153_115_354_744_038_46e-8,
    ];
    const D: [f64; 8] = [
        1.574_492_611_070_983_47e1,
        1.176_939_508_913_124_99e2,
        5.371_811_018_620_098_58e2,
        1.621_389_574_566_690_19e3,
        3.290_799_235_733_459_63e3,
        4.362_619_090_143_247_16e3,
        3.439_367_674_143_721_64e3,
        1.230_339_354_803_749_42e3,
    ];
    let mut num = C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + C[i]) * y;
        den = (den + D[i]) * y;
    }
    exp_msq(y) * (num + C[7]) / (den + D[7])
}

/// erfc on y > 4.
#[allow(clippy::excessive_precision)] // published coefficient tables
fn erfc_far(y: f64) -> f64 {
    const P: [f64; 6] = [
        3.053_266_349_612_323_44e-1,
        3.603_448_999_498_044_39e-1,
        1.257_817_261_112_292_46e-1,
        1.608_378_514_874_227_66e-2,
        6.587_491_615_298_378_03e-4,
        1.631_538_713_730_209_78e-2,
    ];
    const Q: [f64; 5] = [
        2.568_520_192_289_822_42e0,
        1.872_952_849_923_460_47e0,
        5.279_051_029_514_284_12e-1,
        6.051_834_131_244_131_91e-2,
        2.335_204_976_268_691_85e-3,
    ];
    const SQRPI: f64 = 5.641_895_835_477_562_87e-1;
    if y >= 26.5 {
        return 0.0;
    }
    let z = 1.0 / (y * y);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    let r = z * (num + P[4]) / (den + Q[4]);
    exp_msq(y) * (SQRPI - r) / y
}

/// Inverse of the standard normal distribution function (Wichura's PPND16,
/// relative error ~1e-16).  Returns the +-infinity sentinels at p = 0, 1.
#[allow(clippy::excessive_precision)] // published coefficient tables
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("quantile argument {p} is outside [0,1]")));
    }
    if p == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        const A: [f64; 8] = [
            3.387_132_872_796_366_608e0,
            1.331_416_678_917_843_774_5e2,
            1.971_590_950_306_551_442_7e3,
            1.373_169_376_550_946_112_5e4,
            4.592_195_393_154_987_145_7e4,
            6.726_577_092_700_870_085_3e4,
            3.343_057_558_358_812_810_5e4,
            2.509_080_928_730_122_672_7e3,
        ];
        const B: [f64; 7] = [
            4.231_333_070_160_091_125_2e1,
            6.871_870_074_920_579_083e2,
            5.394_196_021_424_751_107_7e3,
            2.121_379_430_158_659_586_7e4,
            3.930_789_580_009_271_061e4,
            2.872_908_573_572_194_267_4e4,
            5.226_495_278_852_854_561e3,
        ];
        let r = 0.180625 - q * q;
        let mut num = A[7];
        let mut den = B[6];
        for i in (0..7).rev() {
            num = num * r + A[i];
        }
        for i in (0..6).rev() {
            den = den * r + B[i];
        }
        den = den * r + 1.0;
        return Ok(q * num / den);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut t = (-r.ln()).sqrt();
    let x = if t <= 5.0 {
        const C: [f64; 8] = [
            1.423_437_110_749_683_577_34e0,
            4.630_337_846_156_545_295_9e0,
            5.769_497_221_460_691_405_5e0,
            3.647_848_324_763_204_605e0,
            1.270_458_252_452_368_382_58e0,
            2.417_807_251_774_506_117_7e-1,
            2.272_384_498_926_918_458_33e-2,
            7.745_450_142_783_414_076_4e-4,
        ];
        const D: [f64; 7] = [
            2.053_191_626_637_758_821_87e0,
            1.676_384_830_183_803_849_4e0,
            6.897_673_349_851_000_455e-1,
            1.481_039_764_274_800_745_9e-1,
            1.519_866_656_361_645_719_66e-2,
            5.475_938_084_995_344_946e-4,
            1.050_750_071_644_416_843_24e-9,
        ];
        t -= 1.6;
        let mut num = C[7];
        let mut den = D[6];
        for i in (0..7).rev() {
            num = num * t + C[i];
        }
        for i in (0..6).rev() {
            den = den * t + D[i];
        }
        den = den * t + 1.0;
        num / den
    } else {
        const E: [f64; 8] = [
            6.657_904_643_501_103_777_2e0,
            5.463_784_911_164_114_369e0,
            1.784_826_539_917_291_335_8e0,
            2.965_605_718_285_048_912_3e-1,
            2.653_218_952_657_612_309_3e-2,
            1.242_660_947_388_078_438_6e-3,
            2.711_555_568_743_487_578_15e-5,
            2.010_334_399_292_288_132_65e-7,
        ];
        const F: [f64; 7] = [
            5.998_322_065_558_879_376_9e-1,
            1.369_298_809_227_358_053_1e-1,
            1.487_536_129_085_061_485_25e-2,
            7.868_691_311_456_132_591e-4,
            1.846_318_317_510_054_681_8e-5,
            1.421_511_758_316_445_888_7e-7,
            2.044_263_103_389_939_785_64e-15,
        ];
        t -= 5.0;
        let mut num = E[7];
        let mut den = F[6];
        for i in (0..7).rev() {
            num = num * t + E[i];
        }
        for i in (0..6).rev() {
            den = den * t + F[i];
        }
        den = den * t + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -x } else { x })
}

// --- shift and difference bounds -------------------------------------------

/// Gaussian shift sandwich: `(Phi(theta - norm_low), Phi(theta + norm_up))`
/// with `theta = Phi^-1(psi0)`.
pub fn shift_bounds(psi0: f64, norm_low: f64, norm_up: f64) -> Result<(f64, f64)> {
    if !(psi0 > 0.0 && psi0 < 1.0) {
        return Err(Error::domain(format!(
            "shift bounds need psi(u;0) in (0,1), got {psi0}"
        )));
    }
    if norm_low < 0.0 || norm_up < 0.0 {
        return Err(Error::domain(format!(
            "norms must be nonnegative, got ({norm_low}, {norm_up})"
        )));
    }
    let theta = normal_quantile(psi0)?;
    Ok((normal_cdf(theta - norm_low), normal_cdf(theta + norm_up)))
}

/// Bounds on `psi(u;h) - psi(u;0)`: `(-norm_low / sqrt(2 pi), norm_up / sqrt(2 pi))`.
pub fn diff_bounds(norm_low: f64, norm_up: f64) -> Result<(f64, f64)> {
    if norm_low < 0.0 || norm_up < 0.0 {
        return Err(Error::domain(format!(
            "norms must be nonnegative, got ({norm_low}, {norm_up})"
        )));
    }
    Ok((-norm_low * FRAC_1_SQRT_2PI, norm_up * FRAC_1_SQRT_2PI))
}

/// The coarser two-sided difference bound `2 Phi(||h|| / 2) - 1` that uses
/// the full trend norm; exposed for comparison with [`diff_bounds`].
pub fn coarse_diff_bound(norm_h: f64) -> Result<f64> {
    if norm_h < 0.0 {
        return Err(Error::domain(format!("norm must be nonnegative, got {norm_h}")));
    }
    Ok(2.0 * normal_cdf(norm_h / 2.0) - 1.0)
}

// --- exponential bounds -----------------------------------------------------

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

/// Exponential upper bound
/// `psi_residual * exp(-||h_under||^2 / 2 + int u d(h_under''))`, where
/// `psi_residual` estimates `psi(u; h - h_under)` (pass 1 for the trivial
/// relaxation).  The projection certificates are re-checked first.
pub fn exp_upper_bound(
    u: &GridFn2D,
    h: &GridFn2D,
    pr: &ProjectionResult,
    psi_residual: f64,
) -> Result<f64> {
    check_probability("psi_residual", psi_residual)?;
    u.same_grid(h)?;
    let report = verify_projection(h, pr, 1e-6)?;
    if !report.pass {
        return Err(Error::domain(
            "projection result fails its certificates; re-solve before bounding",
        ));
    }
    let cells = mixed_second_diff(&pr.h_bar)?;
    let i_u = stieltjes_integral_2d(u, &cells)?;
    Ok(psi_residual * (-0.5 * pr.norm * pr.norm + i_u).exp())
}

/// Exponential lower bound
/// `band * exp(-||h_under||^2 / 2 + int l d(h_under''))`, where `band`
/// estimates `P(l <= B0 <= u everywhere)`.
pub fn exp_lower_bound(
    l: &GridFn2D,
    u: &GridFn2D,
    pr: &ProjectionResult,
    band: f64,
) -> Result<f64> {
    check_probability("band", band)?;
    l.same_grid(u)?;
    let n = l.n();
    for i in 0..=n {
        for j in 0..=n {
            if l.at(i, j) > u.at(i, j) {
                return Err(Error::domain(format!(
                    "lower boundary exceeds upper boundary at node ({i}, {j})"
                )));
            }
        }
    }
    let cells = mixed_second_diff(&pr.h_bar)?;
    let i_l = stieltjes_integral_2d(l, &cells)?;
    Ok(band * (-0.5 * pr.norm * pr.norm + i_l).exp())
}

/// Constant-boundary specialisation of the upper bound: for `u = c` the
/// Stieltjes integral collapses to `c` times the corner combination of
/// `h_under''`, which must equal the total measure mass (telescoping).
pub fn constant_boundary_upper(c: f64, pr: &ProjectionResult, psi_residual: f64) -> Result<f64> {
    if c <= 0.0 {
        return Err(Error::domain(format!("constant boundary must be positive, got {c}")));
    }
    check_probability("psi_residual", psi_residual)?;
    let cells = mixed_second_diff(&pr.h_bar)?;
    let corner = corner_combination(&cells);
    let mass = cells.total_mass();
    if (corner - mass).abs() > 1e-10 * (1.0 + corner.abs()) {
        return Err(Error::domain(format!(
            "corner combination {corner} disagrees with total measure mass {mass}"
        )));
    }
    Ok(psi_residual * (-0.5 * pr.norm * pr.norm + c * corner).exp())
}

// --- boundary-at-zero bound --------------------------------------------------

/// One evaluated candidate of [`psi0_upper_bound`].
#[derive(Debug, Clone, Serialize)]
pub struct CandidateBound {
    pub label: String,
    pub value: f64,
    pub norm: f64,
    pub integral: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Psi0Bound {
    pub value: f64,
    pub argmin: String,
    pub candidates: Vec<CandidateBound>,
}

/// Built-in product-concave candidate family: tents with varying apex,
/// the parabola product, and a mixed tent/parabola product.
pub fn builtin_candidates(n: usize) -> Result<Vec<(String, GridFn2D)>> {
    let mut out = Vec::new();
    for apex in [0.25, 0.375, 0.5, 0.625, 0.75] {
        let t = trends::skew_tent(n, apex)?;
        out.push((format!("tent-apex-{apex}"), GridFn2D::outer(&t, &t)?));
    }
    out.push(("parabola-product".into(), trends::parabola_product(n)?));
    let tent = trends::tent(n)?;
    let parab = trends::parabola(n)?;
    out.push(("tent-x-parabola".into(), GridFn2D::outer(&tent, &parab)?));
    Ok(out)
}

/// Upper bound on `psi(u; 0)`: the minimum over candidates `h` of
/// `Phi(int u d(h_under'') / ||h_under||)`.  Candidates with a vanishing
/// projection are skipped; it is an error if none remain.
pub fn psi0_upper_bound(
    u: &GridFn2D,
    candidates: &[(String, GridFn2D)],
    include_builtin: bool,
) -> Result<Psi0Bound> {
    let mut all: Vec<(String, GridFn2D)> = candidates.to_vec();
    if include_builtin {
        all.extend(builtin_candidates(u.n())?);
    }
    let mut evaluated = Vec::new();
    for (label, cand) in &all {
        u.same_grid(cand)?;
        let pr = project_polar_cone(cand, DEFAULT_SOLVER_TOL, DEFAULT_MAX_ITER)?;
        if pr.norm <= 1e-12 {
            continue;
        }
        let cells = mixed_second_diff(&pr.h_bar)?;
        let integral = stieltjes_integral_2d(u, &cells)?;
        evaluated.push(CandidateBound {
            label: label.clone(),
            value: normal_cdf(integral / pr.norm),
            norm: pr.norm,
            integral,
        });
    }
    let best = evaluated
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.value.total_cmp(&b.value))
        .map(|(i, c)| (i, c.value, c.label.clone()));
    match best {
        Some((_, value, argmin)) => Ok(Psi0Bound { value, argmin, candidates: evaluated }),
        None => Err(Error::domain(
            "every candidate projects to zero; the bound is undefined",
        )),
    }
}

/// Alternate display of the zero-trend bound for a 1D product factor `h`:
/// `Phi(c^2 ((h~'(1) - h~'(0)) / ||h~||^2)^2)`.  Kept alongside
/// [`psi0_upper_bound`] for comparison; the two displays differ in general
/// and the projection form is the one used by the report.
pub fn psi0_alternate_product_display(c: f64, h: &GridFn1D) -> Result<f64> {
    if c <= 0.0 {
        return Err(Error::domain(format!("constant boundary must be positive, got {c}")));
    }
    let m = least_concave_majorant(h)?;
    if m.norm <= 1e-12 {
        return Err(Error::domain("majorant is zero; the display is undefined"));
    }
    let ones = GridFn1D::from_fn(h.n(), |_| 1.0)?;
    let jump = stieltjes_integral_1d(&ones, &m.h_tilde, 1e-9)?;
    let ratio = jump / (m.norm * m.norm);
    Ok(normal_cdf(c * c * ratio * ratio))
}

// --- product-form bounds ------------------------------------------------------

/// Exponential bound factors for product trends and boundaries.
#[derive(Debug, Clone, Serialize)]
pub struct ProductBounds {
    /// `||h1~||^2 ||h2~||^2`.
    pub norm_sq: f64,
    /// `prod_i int u_i d(-h_i~')`.
    pub upper_integral: f64,
    /// `prod_i int l_i d(-h_i~')`.
    pub lower_integral: f64,
    /// `exp(-norm_sq/2 + upper_integral)`: multiplies `psi(u; h - h~)`.
    pub upper_factor: f64,
    /// `exp(-norm_sq/2 + lower_integral)`: multiplies the band probability.
    pub lower_factor: f64,
}

/// Product bounds for `h = h1 x h2`, `u = u1 x u2`, `l = l1 x l2`, computed
/// from 1D least concave majorants and cross-checked against the assembled
/// 2D route, which must agree to 1e-8 relative (the 2D Stieltjes integral of
/// a product boundary against a product measure factorizes).
pub fn product_bounds(
    u1: &GridFn1D,
    u2: &GridFn1D,
    l1: &GridFn1D,
    l2: &GridFn1D,
    h1: &GridFn1D,
    h2: &GridFn1D,
) -> Result<ProductBounds> {
    let m1 = least_concave_majorant(h1)?;
    let m2 = least_concave_majorant(h2)?;
    // also enforces the domination precondition
    let h_under = product_majorant(h1, h2)?;

    let ctol = 1e-9;
    let iu = stieltjes_integral_1d(u1, &m1.h_tilde, ctol)?
        * stieltjes_integral_1d(u2, &m2.h_tilde, ctol)?;
    let il = stieltjes_integral_1d(l1, &m1.h_tilde, ctol)?
        * stieltjes_integral_1d(l2, &m2.h_tilde, ctol)?;
    let norm_sq = m1.norm * m1.norm * m2.norm * m2.norm;

    // 2D cross-check on the assembled objects
    let cells = mixed_second_diff(&h_under)?;
    let u2d = GridFn2D::outer(u1, u2)?;
    let l2d = GridFn2D::outer(l1, l2)?;
    let iu2 = stieltjes_integral_2d(&u2d, &cells)?;
    let il2 = stieltjes_integral_2d(&l2d, &cells)?;
    let norm2d = crate::grid::rkhs_norm_2d(&h_under)?;
    for (a, b, what) in [
        (iu, iu2, "upper integral"),
        (il, il2, "lower integral"),
        (norm_sq, norm2d * norm2d, "norm"),
    ] {
        if (a - b).abs() > 1e-8 * (1.0 + a.abs()) {
            return Err(Error::domain(format!(
                "product {what} {a} disagrees with 2D route {b}"
            )));
        }
    }

    Ok(ProductBounds {
        norm_sq,
        upper_integral: iu,
        lower_integral: il,
        upper_factor: (-0.5 * norm_sq + iu).exp(),
        lower_factor: (-0.5 * norm_sq + il).exp(),
    })
}

/// Leading-order log-probability of `psi(u1 x u2; gamma h1 x h2)`:
/// `-gamma^2/2 ||h1~||^2 ||h2~||^2 + gamma prod_i int u_i d(-h_i~')`.
/// Requires boundaries bounded below by a positive constant.
pub fn product_asymptote(
    u1: &GridFn1D,
    u2: &GridFn1D,
    h1: &GridFn1D,
    h2: &GridFn1D,
    gamma: f64,
) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::domain(format!("gamma must be nonnegative, got {gamma}")));
    }
    for (name, u) in [("u1", u1), ("u2", u2)] {
        if u.min_value() <= 0.0 {
            return Err(Error::domain(format!(
                "{name} must be bounded below by a positive constant, min = {}",
                u.min_value()
            )));
        }
    }
    let m1 = least_concave_majorant(h1)?;
    let m2 = least_concave_majorant(h2)?;
    let ctol = 1e-9;
    let iu = stieltjes_integral_1d(u1, &m1.h_tilde, ctol)?
        * stieltjes_integral_1d(u2, &m2.h_tilde, ctol)?;
    let norm_sq = m1.norm * m1.norm * m2.norm * m2.norm;
    Ok(-0.5 * gamma * gamma * norm_sq + gamma * iu)
}

// --- report assembly ------------------------------------------------------------

/// Everything the bound assembly needs; the Monte Carlo estimates are
/// produced by the caller so this stays a pure computation.
pub struct BoundInputs<'a> {
    pub u: &'a GridFn2D,
    pub h: &'a GridFn2D,
    pub lower: &'a GridFn2D,
    /// Projection of `h` onto the polar cone (minimal majorant).
    pub pr_under: &'a ProjectionResult,
    /// Mirror projection (minimal-norm minorant).
    pub pr_over: &'a ProjectionResult,
    pub norm_h: f64,
    pub psi0: McEstimate,
    pub psi: Option<McEstimate>,
    pub psi_residual: Option<McEstimate>,
    pub band: Option<McEstimate>,
}

/// Reconciliation report: every analytic bound next to the Monte Carlo
/// estimates it brackets.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub psi0_hat: McEstimate,
    pub theta: f64,
    pub theta_std_err: f64,
    pub norm_h: f64,
    /// `||h_under||`, drives the lower shift bound.
    pub norm_h_low: f64,
    /// `||h_over||`, drives the upper shift bound.
    pub norm_h_up: f64,
    pub shift_lower: f64,
    pub shift_upper: f64,
    pub diff_lower: f64,
    pub diff_upper: f64,
    pub coarse_diff: f64,
    pub exp_upper: f64,
    pub exp_lower: f64,
    /// `c * corner combination` when the boundary is constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corner_term: Option<f64>,
    /// `int u d(h_under'')`.
    pub stieltjes_i: f64,
    /// `int l d(h_under'')`.
    pub stieltjes_i_lower: f64,
    /// Measure mass on the boundary frame; identically zero under the
    /// constant-outside extension, reported for the record.
    pub edge_mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_hat: Option<McEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_residual_hat: Option<McEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_hat: Option<McEstimate>,
    pub flags: Vec<String>,
}

/// Assembles the report.  Monte Carlo reconciliation flags compare each
/// bound with `psi_hat` at three combined standard errors.
pub fn assemble_report(inp: BoundInputs<'_>) -> Result<BoundReport> {
    let psi0 = inp.psi0.p();
    if !(psi0 > 0.0 && psi0 < 1.0) {
        return Err(Error::domain(format!(
            "reconciliation needs psi(u;0) in (0,1), got {psi0}"
        )));
    }
    let theta = normal_quantile(psi0)?;
    let theta_std_err = inp.psi0.std_err / normal_pdf(theta);

    let norm_low = inp.pr_under.norm;
    let norm_up = inp.pr_over.norm;
    let (shift_lower, shift_upper) = shift_bounds(psi0, norm_low, norm_up)?;
    let (diff_lower, diff_upper) = diff_bounds(norm_low, norm_up)?;
    let coarse_diff = coarse_diff_bound(inp.norm_h)?;

    let cells = mixed_second_diff(&inp.pr_under.h_bar)?;
    let stieltjes_i = stieltjes_integral_2d(inp.u, &cells)?;
    let stieltjes_i_lower = stieltjes_integral_2d(inp.lower, &cells)?;
    let edge_mass: f64 = 0.0;

    let psi_residual_p = inp.psi_residual.as_ref().map_or(1.0, |e| e.p());
    let exp_upper = exp_upper_bound(inp.u, inp.h, inp.pr_under, psi_residual_p)?;
    let band_p = inp.band.as_ref().map_or(1.0, |e| e.p());
    let exp_lower = exp_lower_bound(inp.lower, inp.u, inp.pr_under, band_p)?;

    let u0 = inp.u.at(0, 0);
    let constant_u = inp.u.values().iter().all(|&v| v == u0);
    let corner_term = if constant_u && u0 > 0.0 {
        Some(u0 * corner_combination(&cells))
    } else {
        None
    };

    let mut flags = Vec::new();
    if edge_mass.abs() > 0.01 * stieltjes_i.abs() && edge_mass != 0.0 {
        flags.push("edge_mass_significant".into());
    }
    if let Some(psi) = &inp.psi {
        let p = psi.p();
        let se_low = normal_pdf(theta - norm_low) * theta_std_err;
        let se_up = normal_pdf(theta + norm_up) * theta_std_err;
        let shift_ok = shift_lower - 3.0 * (psi.std_err.powi(2) + se_low.powi(2)).sqrt() <= p
            && p <= shift_upper + 3.0 * (psi.std_err.powi(2) + se_up.powi(2)).sqrt();
        flags.push(if shift_ok { "shift_sandwich_ok" } else { "shift_sandwich_violated" }.into());

        let exp_up_se = inp
            .psi_residual
            .as_ref()
            .map_or(0.0, |e| e.std_err * (exp_upper / e.p().max(1e-300)));
        let exp_low_se = inp
            .band
            .as_ref()
            .map_or(0.0, |e| e.std_err * (exp_lower / e.p().max(1e-300)));
        let exp_ok = exp_lower - 3.0 * (psi.std_err.powi(2) + exp_low_se.powi(2)).sqrt() <= p
            && p <= exp_upper + 3.0 * (psi.std_err.powi(2) + exp_up_se.powi(2)).sqrt();
        flags.push(if exp_ok { "exp_sandwich_ok" } else { "exp_sandwich_violated" }.into());

        let psi0_p = inp.psi0.p();
        let diff = p - psi0_p;
        let dse = 3.0 * (psi.std_err.powi(2) + inp.psi0.std_err.powi(2)).sqrt();
        let diff_ok = diff >= diff_lower - dse && diff <= diff_upper + dse;
        flags.push(if diff_ok { "diff_bounds_ok" } else { "diff_bounds_violated" }.into());
    }

    Ok(BoundReport {
        psi0_hat: inp.psi0,
        theta,
        theta_std_err,
        norm_h: inp.norm_h,
        norm_h_low: norm_low,
        norm_h_up: norm_up,
        shift_lower,
        shift_upper,
        diff_lower,
        diff_upper,
        coarse_diff,
        exp_upper,
        exp_lower,
        corner_term,
        stieltjes_i,
        stieltjes_i_lower,
        edge_mass,
        psi_hat: inp.psi,
        psi_residual_hat: inp.psi_residual,
        band_hat: inp.band,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::rkhs_norm_2d;
    use crate::trends;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!(normal_cdf(1.0) > 0.841344 && normal_cdf(1.0) < 0.841345);
        let cases = [
            (1.0, 0.841_344_746_068_542_9),
            (-1.0, 0.158_655_253_931_457_05),
            (2.0, 0.977_249_868_051_820_8),
            (-3.0, 1.349_898_031_630_094_5e-3),
            (5.0, 0.999_999_713_348_428_1),
            (-6.0, 9.865_876_450_376_981e-10),
        ];
        for (x, want) in cases {
            let got = normal_cdf(x);
            assert!((got - want).abs() <= 1e-14, "cdf({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn quantile_reference_and_roundtrip() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(normal_quantile(0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0).unwrap(), f64::INFINITY);
        assert!(normal_quantile(-0.1).is_err());
        assert!(normal_quantile(1.1).is_err());
        let mut p = 1e-12;
        while p < 1.0 {
            let q = normal_quantile(p).unwrap();
            assert!((normal_cdf(q) - p).abs() <= 1e-12, "p = {p}");
            p *= 1.9;
        }
        for p in [0.2, 0.35, 0.5, 0.65, 0.8, 0.95, 0.999] {
            let q = normal_quantile(p).unwrap();
            assert!((normal_cdf(q) - p).abs() <= 1e-12, "p = {p}");
        }
    }

    #[test]
    fn shift_bounds_examples() {
        let (lo, hi) = shift_bounds(0.5, 1.0, 1.0).unwrap();
        assert!((lo - 0.158_655_253_931_457_05).abs() < 1e-12);
        assert!((hi - 0.841_344_746_068_542_9).abs() < 1e-12);
        let (lo, hi) = shift_bounds(0.7, 0.0, 0.0).unwrap();
        assert!((lo - 0.7).abs() < 1e-12);
        assert!((hi - 0.7).abs() < 1e-12);
        assert!(shift_bounds(0.0, 1.0, 1.0).is_err());
        assert!(shift_bounds(1.0, 1.0, 1.0).is_err());
        assert!(shift_bounds(0.5, -1.0, 0.0).is_err());
    }

    #[test]
    fn diff_bounds_examples() {
        assert_eq!(diff_bounds(0.0, 0.0).unwrap(), (0.0, 0.0));
        let (lo, _) = diff_bounds(1.0, 0.0).unwrap();
        assert!((lo + 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn refined_diff_beats_coarse_when_projection_shrinks() {
        // mixed-sign trend: the majorant norm is well below the trend norm,
        // so the refined bound undercuts the coarse one
        let h = trends::mixed_sign(16).unwrap();
        let pr = project_polar_cone(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let norm_h = rkhs_norm_2d(&h).unwrap();
        assert!(pr.norm < norm_h);
        let (lo, _) = diff_bounds(pr.norm, 0.0).unwrap();
        let coarse = coarse_diff_bound(norm_h).unwrap();
        assert!(-lo <= coarse, "refined {} vs coarse {coarse}", -lo);
    }

    #[test]
    fn exp_upper_reduces_to_residual_for_nonpositive_trend() {
        let n = 8;
        let h = trends::negative_bump(n).unwrap();
        let pr = project_polar_cone(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let u = GridFn2D::constant(n, 0.5).unwrap();
        let bound = exp_upper_bound(&u, &h, &pr, 0.37).unwrap();
        assert_eq!(bound, 0.37);
    }

    #[test]
    fn constant_boundary_tent_product_corner() {
        let n = 16;
        let h = trends::tent_product(n).unwrap();
        let pr = project_polar_cone(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let c = 0.5;
        let bound = constant_boundary_upper(c, &pr, 1.0).unwrap();
        let want = (-0.5 + 4.0 * c).exp();
        assert!((bound - want).abs() < 1e-9 * want, "{bound} vs {want}");
        // matches the general Stieltjes route
        let u = GridFn2D::constant(n, c).unwrap();
        let general = exp_upper_bound(&u, &h, &pr, 1.0).unwrap();
        assert!((bound - general).abs() < 1e-10 * want);
    }

    #[test]
    fn corner_combination_of_parabola_product_tends_to_four() {
        let n = 256;
        let h = trends::parabola_product(n).unwrap();
        let pr = project_polar_cone(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let cells = mixed_second_diff(&pr.h_bar).unwrap();
        let corner = corner_combination(&cells);
        let nn = n as f64;
        assert!((corner - 4.0).abs() <= 4.0 * 2.0 / nn, "corner {corner}");
    }

    #[test]
    fn exp_lower_constant_level_pulls_out_mass() {
        let n = 16;
        let h = trends::tent_product(n).unwrap();
        let pr = project_polar_cone(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let c = 0.4;
        let l = GridFn2D::constant(n, -c).unwrap();
        let u = GridFn2D::constant(n, c).unwrap();
        let band = 0.6;
        let got = exp_lower_bound(&l, &u, &pr, band).unwrap();
        // mass M = 4, so the exponent is -1/2 - c M
        let want = band * (-0.5 - c * 4.0).exp();
        assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");

        // nonpositive trend: the factor degenerates to the band probability
        let neg = trends::negative_bump(n).unwrap();
        let pr0 = project_polar_cone(&neg, 1e-8, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(exp_lower_bound(&l, &u, &pr0, band).unwrap(), band);
        // and rejects inverted boundaries
        assert!(exp_lower_bound(&u, &l, &pr0, band).is_err());
    }

    #[test]
    fn psi0_bound_dominates_monte_carlo() {
        use crate::estimator::{estimate_direct, McOptions};
        let n = 16;
        let c = 0.3;
        let u = GridFn2D::constant(n, c).unwrap();
        let bound = psi0_upper_bound(&u, &[], true).unwrap();
        let zero = GridFn2D::zeros(n).unwrap();
        let psi0 = estimate_direct(&u, &zero, McOptions::new(50_000, 404)).unwrap();
        assert!(
            psi0.p() <= bound.value + 3.0 * psi0.std_err,
            "psi0 {} vs bound {} ({})",
            psi0.p(),
            bound.value,
            bound.argmin
        );
    }

    #[test]
    fn alternate_product_display_evaluates() {
        let n = 16;
        let c = 0.3;
        let t = trends::tent(n).unwrap();
        let alt = psi0_alternate_product_display(c, &t).unwrap();
        // tent: slope jump 2, norm^2 = 1, so the display is Phi(4 c^2)
        assert!((alt - normal_cdf(4.0 * c * c)).abs() < 1e-12);
        assert!(alt >= 0.5);
        let flat = GridFn1D::zeros(n).unwrap();
        assert!(psi0_alternate_product_display(c, &flat).is_err());
    }

    #[test]
    fn report_assembly_flags_and_interval_consistency() {
        use crate::estimator::McEstimate;
        let n = 8;
        let u = GridFn2D::constant(n, 0.5).unwrap();
        let l = GridFn2D::constant(n, -0.5).unwrap();
        let h = trends::parabola_product(n).unwrap().scaled(0.5);
        let pr_under = project_polar_cone(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let pr_over = crate::majorant::project_w(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let norm_h = crate::grid::rkhs_norm_2d(&h).unwrap();
        let fake = |p: f64, se: f64| McEstimate {
            p_hat: Some(p),
            log_p_hat: None,
            std_err: se,
            log_std_err: None,
            ci95: (p - 1.96 * se, p + 1.96 * se),
            n_paths: 10_000,
            n_grid: n,
            seed: 0,
            flags: Vec::new(),
        };
        let report = assemble_report(BoundInputs {
            u: &u,
            h: &h,
            lower: &l,
            pr_under: &pr_under,
            pr_over: &pr_over,
            norm_h,
            psi0: fake(0.85, 0.004),
            psi: Some(fake(0.84, 0.004)),
            psi_residual: Some(fake(0.85, 0.004)),
            band: Some(fake(0.8, 0.004)),
        })
        .unwrap();
        assert!(report.flags.iter().any(|f| f == "shift_sandwich_ok"), "{:?}", report.flags);
        assert!(report.flags.iter().any(|f| f == "exp_sandwich_ok"), "{:?}", report.flags);
        assert!(report.corner_term.is_some());
        assert_eq!(report.edge_mass, 0.0);

        // the two bound displays always intersect: psi0 lies in both
        let psi0 = report.psi0_hat.p();
        assert!(report.shift_lower <= psi0 && psi0 <= report.shift_upper);
        let diff_int = (psi0 + report.diff_lower, psi0 + report.diff_upper);
        assert!(diff_int.0 <= report.shift_upper && report.shift_lower <= diff_int.1);

        // degenerate psi0 is rejected
        assert!(assemble_report(BoundInputs {
            u: &u,
            h: &h,
            lower: &l,
            pr_under: &pr_under,
            pr_over: &pr_over,
            norm_h,
            psi0: fake(1.0, 0.0),
            psi: None,
            psi_residual: None,
            band: None,
        })
        .is_err());
    }

    #[test]
    fn constant_boundary_zero_projection() {
        let n = 8;
        let h = trends::negative_bump(n).unwrap();
        let pr = project_polar_cone(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let b = constant_boundary_upper(0.3, &pr, 0.8).unwrap();
        assert_eq!(b, 0.8);
    }

    #[test]
    fn psi0_bound_tent_product_candidate() {
        let n = 16;
        let c = 0.3;
        let u = GridFn2D::constant(n, c).unwrap();
        let cand = vec![("tent-product".to_string(), trends::tent_product(n).unwrap())];
        let bound = psi0_upper_bound(&u, &cand, false).unwrap();
        // I = 4c and ||h_under|| = 1 exactly on dyadic grids
        let want = normal_cdf(4.0 * c);
        assert!((bound.value - want).abs() < 1e-12, "{} vs {want}", bound.value);
        assert_eq!(bound.argmin, "tent-product");
        assert!(bound.value >= 0.5);
    }

    #[test]
    fn psi0_bound_needs_a_nondegenerate_candidate() {
        let n = 8;
        let u = GridFn2D::constant(n, 0.3).unwrap();
        let cand = vec![("flat".to_string(), trends::negative_bump(n).unwrap())];
        assert!(psi0_upper_bound(&u, &cand, false).is_err());
        // with the builtin family the bound always exists
        assert!(psi0_upper_bound(&u, &cand, true).is_ok());
    }

    #[test]
    fn product_bounds_factorize_against_constant_boundary() {
        let n = 16;
        let c: f64 = 0.25;
        let p = trends::parabola(n).unwrap();
        let sqrt_c = GridFn1D::from_fn(n, |_| c.sqrt()).unwrap();
        let zero = GridFn1D::zeros(n).unwrap();
        let pb = product_bounds(&sqrt_c, &sqrt_c, &zero, &zero, &p, &p).unwrap();
        // each factor integral is sqrt(c) * 2 (1 - 1/n)
        let per_axis = c.sqrt() * 2.0 * (1.0 - 1.0 / n as f64);
        assert!((pb.upper_integral - per_axis * per_axis).abs() < 1e-12);
        assert_eq!(pb.lower_integral, 0.0);
        // the same exponent as the constant-boundary 2D bound with u = c
        let h = trends::parabola_product(n).unwrap();
        let pr = project_polar_cone(&h, 1e-8, DEFAULT_MAX_ITER).unwrap();
        let two_d = constant_boundary_upper(c, &pr, 1.0).unwrap();
        assert!((pb.upper_factor - two_d).abs() < 1e-8 * two_d);
    }

    #[test]
    fn product_bounds_concave_fixed_point() {
        let n = 8;
        let p = trends::parabola(n).unwrap();
        let m = least_concave_majorant(&p).unwrap();
        assert_eq!(m.h_tilde, p);
    }

    #[test]
    fn product_asymptote_tent_factors() {
        let n = 16;
        let c: f64 = 0.25;
        let t = trends::tent(n).unwrap();
        let sqrt_c = GridFn1D::from_fn(n, |_| c.sqrt()).unwrap();
        for gamma in [0.5, 2.0, 8.0] {
            let v = product_asymptote(&sqrt_c, &sqrt_c, &t, &t, gamma).unwrap();
            let want = -0.5 * gamma * gamma + gamma * 4.0 * c;
            assert!((v - want).abs() < 1e-10, "{v} vs {want}");
        }
        assert_eq!(product_asymptote(&sqrt_c, &sqrt_c, &t, &t, 0.0).unwrap(), 0.0);
        let touching_zero = trends::parabola(n).unwrap();
        assert!(product_asymptote(&touching_zero, &sqrt_c, &t, &t, 1.0).is_err());
    }
}
