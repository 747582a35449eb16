//! Reference implementations for testing [`crate::overlap`].
//!
//! Both oracles recompute corners and containment on their own and share no
//! code with the vertex-collection kernel: [`clip_iou`] clips one rectangle
//! against the four half-planes of the other, and [`mc_iou`] counts uniform
//! samples over the joint bounding window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{Box3, RBox2, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid range for {name}: [{lo}, {hi}]")]
    InvalidRange {
        name: &'static str,
        lo: f64,
        hi: f64,
    },
    #[error("regime mix must have non-negative weights with a positive sum")]
    InvalidMix,
}

fn corners_of(b: &RBox2) -> [Vec2; 4] {
    let (s, c) = b.yaw().sin_cos();
    let (hw, hl) = (0.5 * b.w(), 0.5 * b.l());
    [(hw, hl), (-hw, hl), (-hw, -hl), (hw, -hl)]
        .map(|(u, v)| Vec2::new(b.cx() + c * u - s * v, b.cy() + s * u + c * v))
}

fn polygon_area(vs: &[Vec2]) -> f64 {
    if vs.len() < 3 {
        return 0.0;
    }
    let n = vs.len();
    (0..n)
        .map(|i| vs[i].cross(vs[(i + 1) % n]))
        .sum::<f64>()
        .abs()
        * 0.5
}

/// Sutherland-Hodgman: keep the part of `subject` left of `a -> b`.
fn clip_half_plane(subject: &[Vec2], a: Vec2, b: Vec2) -> Vec<Vec2> {
    let e = b - a;
    let side = |p: Vec2| e.cross(p - a);
    let mut out = Vec::with_capacity(subject.len() + 1);
    for i in 0..subject.len() {
        let cur = subject[i];
        let next = subject[(i + 1) % subject.len()];
        let (sc, sn) = (side(cur), side(next));
        if sc >= 0.0 {
            out.push(cur);
        }
        if (sc >= 0.0) != (sn >= 0.0) {
            let t = sc / (sc - sn);
            out.push(cur + (next - cur) * t);
        }
    }
    out
}

/// Intersection area by successive half-plane clipping.
pub fn clip_intersection_area(g: &RBox2, d: &RBox2) -> f64 {
    let clip = corners_of(d);
    let mut poly = corners_of(g).to_vec();
    for i in 0..4 {
        if poly.is_empty() {
            break;
        }
        poly = clip_half_plane(&poly, clip[i], clip[(i + 1) % 4]);
    }
    polygon_area(&poly)
}

pub fn clip_iou(g: &RBox2, d: &RBox2) -> f64 {
    let inter = clip_intersection_area(g, d);
    inter / (g.w() * g.l() + d.w() * d.l() - inter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    /// Estimated IoU: intersection hits over union hits.
    pub estimate: f64,
    /// `sqrt(p(1-p)/n)` with `n` the union hit count.
    pub stderr: f64,
    /// Estimated intersection area (window area times hit fraction).
    pub intersection_area: f64,
    /// Standard error of `intersection_area`.
    pub area_stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

const MC_CHUNK: u64 = 1 << 16;

fn inside(b: &RBox2, p: Vec2) -> bool {
    let (s, c) = b.yaw().sin_cos();
    let dx = p.x - b.cx();
    let dy = p.y - b.cy();
    (c * dx + s * dy).abs() <= 0.5 * b.w() && (-s * dx + c * dy).abs() <= 0.5 * b.l()
}

/// Monte-Carlo IoU over the joint axis-aligned window. Chunk `k` of the
/// sample stream uses ChaCha stream `k`, so the result does not depend on
/// thread scheduling.
pub fn mc_iou(g: &RBox2, d: &RBox2, samples: u64, seed: u64) -> McEstimate {
    let samples = samples.max(1);
    let cs: Vec<Vec2> = corners_of(g).into_iter().chain(corners_of(d)).collect();
    let lo = cs
        .iter()
        .fold(Vec2::new(f64::INFINITY, f64::INFINITY), |a, p| {
            Vec2::new(a.x.min(p.x), a.y.min(p.y))
        });
    let hi = cs
        .iter()
        .fold(Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| {
            Vec2::new(a.x.max(p.x), a.y.max(p.y))
        });
    let window = (hi.x - lo.x) * (hi.y - lo.y);
    let chunks = samples.div_ceil(MC_CHUNK);
    let (n_inter, n_union) = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let n = MC_CHUNK.min(samples - k * MC_CHUNK);
            let (mut i, mut u) = (0u64, 0u64);
            for _ in 0..n {
                let p = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
                match (inside(g, p), inside(d, p)) {
                    (true, true) => {
                        i += 1;
                        u += 1;
                    }
                    (false, false) => {}
                    _ => u += 1,
                }
            }
            (i, u)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let (estimate, stderr) = if n_union == 0 {
        (0.0, 0.0)
    } else {
        let p = n_inter as f64 / n_union as f64;
        (p, (p * (1.0 - p) / n_union as f64).sqrt())
    };
    let q = n_inter as f64 / samples as f64;
    McEstimate {
        estimate,
        stderr,
        intersection_area: window * q,
        area_stderr: window * (q * (1.0 - q) / samples as f64).sqrt(),
        samples,
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    Overlap,
    Touch,
    Disjoint,
    Nested,
}

/// Relative weights of the four regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeMix {
    pub overlap: f64,
    pub touch: f64,
    pub disjoint: f64,
    pub nested: f64,
}

impl Default for RegimeMix {
    fn default() -> Self {
        Self {
            overlap: 0.55,
            touch: 0.1,
            disjoint: 0.2,
            nested: 0.15,
        }
    }
}

impl RegimeMix {
    pub fn only(regime: Regime) -> Self {
        let mut m = Self {
            overlap: 0.0,
            touch: 0.0,
            disjoint: 0.0,
            nested: 0.0,
        };
        match regime {
            Regime::Overlap => m.overlap = 1.0,
            Regime::Touch => m.touch = 1.0,
            Regime::Disjoint => m.disjoint = 1.0,
            Regime::Nested => m.nested = 1.0,
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairSpec {
    pub center: (f64, f64),
    pub size: (f64, f64),
    pub yaw: (f64, f64),
    pub mix: RegimeMix,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self {
            center: (-10.0, 10.0),
            size: (0.5, 5.0),
            yaw: (-std::f64::consts::PI, std::f64::consts::PI),
            mix: RegimeMix::default(),
        }
    }
}

impl PairSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        let check = |name, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(OracleError::InvalidRange { name, lo, hi })
            }
        };
        check("center", self.center)?;
        check("size", self.size)?;
        check("yaw", self.yaw)?;
        if self.size.0 <= 0.0 {
            return Err(OracleError::InvalidRange {
                name: "size",
                lo: self.size.0,
                hi: self.size.1,
            });
        }
        let m = self.mix;
        let ws = [m.overlap, m.touch, m.disjoint, m.nested];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || ws.iter().sum::<f64>() <= 0.0 {
            return Err(OracleError::InvalidMix);
        }
        Ok(())
    }
}

/// Seed of the `index`-th pair in a run started from `seed`.
pub fn pair_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn pick_regime(rng: &mut ChaCha8Rng, m: &RegimeMix) -> Regime {
    let total = m.overlap + m.touch + m.disjoint + m.nested;
    let mut x = rng.gen::<f64>() * total;
    for (w, r) in [
        (m.overlap, Regime::Overlap),
        (m.touch, Regime::Touch),
        (m.disjoint, Regime::Disjoint),
        (m.nested, Regime::Nested),
    ] {
        if x < w {
            return r;
        }
        x -= w;
    }
    if m.nested > 0.0 {
        Regime::Nested
    } else if m.disjoint > 0.0 {
        Regime::Disjoint
    } else if m.touch > 0.0 {
        Regime::Touch
    } else {
        Regime::Overlap
    }
}

fn local_to_world(b: &RBox2, u: f64, v: f64) -> (f64, f64) {
    let (s, c) = b.yaw().sin_cos();
    (b.cx() + c * u - s * v, b.cy() + s * u + c * v)
}

/// A reproducible box pair in a randomly chosen regime.
pub fn random_pair_with_regime(
    spec: &PairSpec,
    seed: u64,
) -> Result<(RBox2, RBox2, Regime), OracleError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regime = pick_regime(&mut rng, &spec.mix);
    let mk = |cx, cy, w, l, yaw| RBox2::new(cx, cy, w, l, yaw).expect("generated box is valid");
    let g = mk(
        uniform(&mut rng, spec.center),
        uniform(&mut rng, spec.center),
        uniform(&mut rng, spec.size),
        uniform(&mut rng, spec.size),
        uniform(&mut rng, spec.yaw),
    );
    let (dw, dl) = (uniform(&mut rng, spec.size), uniform(&mut rng, spec.size));
    let d = match regime {
        Regime::Overlap => {
            let u = rng.gen_range(-0.45..0.45) * g.w();
            let v = rng.gen_range(-0.45..0.45) * g.l();
            let (x, y) = local_to_world(&g, u, v);
            mk(x, y, dw, dl, uniform(&mut rng, spec.yaw))
        }
        Regime::Touch => {
            // same orientation up to quarter turns, flush along one local axis
            let quarter = rng.gen_range(0..4);
            let yaw = g.yaw() + quarter as f64 * std::f64::consts::FRAC_PI_2;
            let (ext_u, ext_v) = if quarter % 2 == 0 { (dw, dl) } else { (dl, dw) };
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let (u, v) = if rng.gen::<bool>() {
                let slide = rng.gen_range(-0.45..0.45) * (g.l() + ext_v);
                (sign * 0.5 * (g.w() + ext_u), slide)
            } else {
                let slide = rng.gen_range(-0.45..0.45) * (g.w() + ext_u);
                (slide, sign * 0.5 * (g.l() + ext_v))
            };
            let (x, y) = local_to_world(&g, u, v);
            mk(x, y, dw, dl, yaw)
        }
        Regime::Disjoint => {
            let r_g = 0.5 * g.w().hypot(g.l());
            let r_d = 0.5 * dw.hypot(dl);
            let gap = rng.gen_range(0.01..1.0) * spec.size.1;
            let phi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let dist = r_g + r_d + gap;
            mk(
                g.cx() + dist * phi.cos(),
                g.cy() + dist * phi.sin(),
                dw,
                dl,
                uniform(&mut rng, spec.yaw),
            )
        }
        Regime::Nested => {
            // inner box's circumcircle fits strictly inside the outer box
            let half_min = 0.5 * g.w().min(g.l());
            let r = rng.gen_range(0.2..0.9) * half_min;
            let phi = rng.gen_range(0.15..(std::f64::consts::FRAC_PI_2 - 0.15));
            let (iw, il) = (2.0 * r * phi.cos(), 2.0 * r * phi.sin());
            let u = rng.gen_range(-1.0..1.0) * (0.5 * g.w() - r) * 0.95;
            let v = rng.gen_range(-1.0..1.0) * (0.5 * g.l() - r) * 0.95;
            let (x, y) = local_to_world(&g, u, v);
            mk(x, y, iw, il, uniform(&mut rng, spec.yaw))
        }
    };
    if regime == Regime::Nested && rng.gen::<bool>() {
        return Ok((d, g, regime));
    }
    Ok((g, d, regime))
}

pub fn random_pair(spec: &PairSpec, seed: u64) -> Result<(RBox2, RBox2), OracleError> {
    random_pair_with_regime(spec, seed).map(|(g, d, _)| (g, d))
}

/// `n` pairs from one run seed, pair `i` seeded with [`pair_seed`].
pub fn random_pairs(
    spec: &PairSpec,
    seed: u64,
    n: usize,
) -> Result<Vec<(RBox2, RBox2, Regime)>, OracleError> {
    (0..n as u64)
        .map(|i| random_pair_with_regime(spec, pair_seed(seed, i)))
        .collect()
}

/// Extends a footprint pair to cuboids with overlapping vertical extents
/// drawn from `height` (sizes) and `z` (centers).
pub fn lift_pair(
    g: &RBox2,
    d: &RBox2,
    z: (f64, f64),
    height: (f64, f64),
    seed: u64,
) -> (Box3, Box3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hg = uniform(&mut rng, height);
    let hd = uniform(&mut rng, height);
    let zg = uniform(&mut rng, z);
    let reach = 0.5 * (hg + hd);
    let zd = zg + rng.gen_range(-0.9..0.9) * reach;
    let mk = |b: &RBox2, cz, h| {
        Box3::new(b.cx(), b.cy(), cz, b.w(), b.l(), h, b.yaw()).expect("valid cuboid")
    };
    (mk(g, zg, hg), mk(d, zd, hd))
}
