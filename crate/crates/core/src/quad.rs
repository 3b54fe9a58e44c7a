//! Globally adaptive Gauss-Kronrod (10/21) quadrature for complex-valued
//! integrands on finite intervals.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate meets `max(abs_tol, rel_tol * |I|)`. Oscillatory integrands should
//! set `initial_panels` so that every starting panel spans at most a few
//! oscillations; bisection alone cannot discover structure that the first
//! 21-point rule aliases away.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_626_463,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
    pub initial_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_intervals: 20_000,
            initial_panels: 1,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_panels(mut self, panels: usize) -> Self {
        self.initial_panels = panels.max(1);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    // Part of `error` attributable to rounding; splitting cannot remove it.
    floor: f64,
}

impl Segment {
    fn reducible(&self) -> f64 {
        self.error - self.floor
    }
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.reducible() == other.reducible()
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.reducible().total_cmp(&other.reducible())
    }
}

fn kronrod21<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    let mut abs_sum = fc.norm() * WGK[10];
    let mut values = [Complex64::new(0.0, 0.0); 21];
    values[10] = fc;
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        values[j] = f1;
        values[20 - j] = f2;
        kronrod += (f1 + f2) * WGK[j];
        abs_sum += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kronrod * 0.5;
    let mut asc = (fc - mean).norm() * WGK[10];
    for j in 0..10 {
        asc += ((values[j] - mean).norm() + (values[20 - j] - mean).norm()) * WGK[j];
    }
    let value = kronrod * half;
    let res_abs = abs_sum * half.abs();
    let res_asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).norm();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    error = error.max(floor);
    if !value.re.is_finite() || !value.im.is_finite() {
        error = f64::INFINITY;
    }
    Segment {
        a,
        b,
        value,
        error,
        floor,
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("integration limits must be finite"));
    }
    if a == b {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            intervals: 0,
        });
    }
    let panels = cfg.initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let mut heap = BinaryHeap::with_capacity(panels * 2);
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_err = 0.0;
    let mut total_floor = 0.0;
    for i in 0..panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == panels { b } else { lo + width };
        let seg = kronrod21(&f, lo, hi);
        total += seg.value;
        total_err += seg.error;
        total_floor += seg.floor;
        heap.push(seg);
    }
    let mut intervals = panels;
    let min_width = (b - a).abs() * 1e-15;
    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.norm());
        // Stop once the estimate is met, or once what remains is rounding
        // noise from cancellation that further splitting cannot reduce.
        if total_err <= tol || total_err <= 1.5 * total_floor {
            break;
        }
        if intervals >= cfg.max_intervals {
            return Err(Error::QuadratureBudget {
                intervals,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a).abs() < min_width {
            // Cannot refine further; accept the remaining estimate if it is
            // already negligible in absolute terms.
            heap.push(worst);
            if total_err <= 1e3 * tol.max(f64::MIN_POSITIVE) {
                break;
            }
            return Err(Error::QuadratureBudget {
                intervals,
                error: total_err,
            });
        }
        let left = kronrod21(&f, worst.a, mid);
        let right = kronrod21(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        total_floor += left.floor + right.floor - worst.floor;
        heap.push(left);
        heap.push(right);
        intervals += 1;
        // Re-summation keeps drift from the incremental updates bounded.
        if intervals % 256 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
            total_floor = heap.iter().map(|s| s.floor).sum();
        }
    }
    let value: Complex64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error,
        intervals,
    })
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real<F>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate(|x| Complex64::new(f(x), 0.0), a, b, cfg).map(|r| r.value.re)
}
