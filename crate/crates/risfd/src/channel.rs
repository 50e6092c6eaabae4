//! Rician channel generation for one network drop.
//!
//! The scenario is a 2-D plane: the BS sits at the origin, the RIS at
//! horizontal distance `d` and perpendicular offset `d_v`, and the UE cluster
//! center at `d_h` on the horizontal axis. All UL/DL UEs are placed uniformly
//! in a disk of radius `user_radius` around the cluster center.
//!
//! Every link is Rician: `H = sqrt(pl) * (sqrt(rho/(1+rho)) H_los +
//! sqrt(1/(1+rho)) H_nlos)` with unit-variance circularly symmetric Gaussian
//! NLoS entries and a half-wavelength ULA steering outer product as the LoS
//! component. Per-link RNG streams are derived from the master seed and the
//! link endpoints, so a drop is reproducible per seed and reordering UE
//! indices only permutes the matching rows/columns.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cplx::{C64, CMat, CVec};
use crate::{Error, Result};

/// Antenna/element counts: `(N_t, N_r, K, M, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    /// BS transmit antennas.
    pub n_t: usize,
    /// BS receive antennas.
    pub n_r: usize,
    /// RIS elements.
    pub k: usize,
    /// DL UEs.
    pub m: usize,
    /// UL UEs.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    /// BS-RIS horizontal distance (m).
    pub d: f64,
    /// BS to UE-cluster-center horizontal distance (m).
    pub d_h: f64,
    /// BS-RIS perpendicular distance (m).
    pub d_v: f64,
    /// UE cluster disk radius (m).
    pub user_radius: f64,
}

impl Default for ScenarioGeometry {
    fn default() -> Self {
        Self {
            d: 80.0,
            d_h: 200.0,
            d_v: 50.0,
            user_radius: 50.0,
        }
    }
}

impl ScenarioGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.d <= 0.0 || self.d_h <= 0.0 || self.d_v <= 0.0 || self.user_radius <= 0.0 {
            return Err(Error::InvalidConfig(
                "scenario distances must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn bs_position(&self) -> (f64, f64) {
        (0.0, 0.0)
    }

    pub fn ris_position(&self) -> (f64, f64) {
        (self.d, self.d_v)
    }

    pub fn cluster_center(&self) -> (f64, f64) {
        (self.d_h, 0.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RicianParams {
    /// Rician factor (LoS-to-NLoS power ratio).
    pub rho: f64,
    /// Pathloss intercept in dB at 1 m.
    pub pl_intercept_db: f64,
    /// Pathloss slope in dB per decade of distance.
    pub pl_exponent: f64,
    /// RIS reflection efficiency, `0 < beta <= 1`.
    pub beta: f64,
    /// Self-interference isolation in dB, standing in for a pathloss on the
    /// BS Tx-to-Rx loop (which has no meaningful propagation distance).
    pub si_isolation_db: f64,
}

impl Default for RicianParams {
    fn default() -> Self {
        Self {
            rho: 3.0,
            pl_intercept_db: 38.88,
            pl_exponent: 22.0,
            beta: 0.9,
            si_isolation_db: 40.0,
        }
    }
}

impl RicianParams {
    pub fn validate(&self) -> Result<()> {
        if self.rho < 0.0 {
            return Err(Error::InvalidConfig("rician factor must be >= 0".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig("beta must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// The eight channel matrices of one network drop.
///
/// `u`: UL UE to BS (`N_r x N`), `u1`: UL UE to RIS (`K x N`), `u2`: RIS to
/// BS (`N_r x K`), `d`: BS to DL UE (`M x N_t`), `d1`: BS to RIS
/// (`K x N_t`), `d2`: RIS to DL UE (`M x K`), `s`: BS Tx to BS Rx
/// self-interference (`N_r x N_t`), `v`: UL UE to DL UE co-channel
/// interference (`M x N`).
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub sizes: Sizes,
    pub u: CMat,
    pub u1: CMat,
    pub u2: CMat,
    pub d: CMat,
    pub d1: CMat,
    pub d2: CMat,
    pub s: CMat,
    pub v: CMat,
}

/// Linear power gain `10^(-PL_dB/10)` with
/// `PL_dB = intercept + slope * log10(distance)`.
pub fn pathloss_linear(distance: f64, params: &RicianParams) -> Result<f64> {
    if distance <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "pathloss distance must be positive, got {distance}"
        )));
    }
    let pl_db = params.pl_intercept_db + params.pl_exponent * distance.log10();
    Ok(10f64.powf(-pl_db / 10.0))
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Half-wavelength ULA steering vector at angle `phi` (radians).
fn steering(n: usize, phi: f64) -> CVec {
    CVec::from_fn(n, |i, _| {
        C64::from_polar(1.0, std::f64::consts::PI * i as f64 * phi.sin())
    })
}

fn angle(from: (f64, f64), to: (f64, f64)) -> f64 {
    (to.1 - from.1).atan2(to.0 - from.0)
}

/// One circularly symmetric complex Gaussian with unit variance.
fn cn01(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re / 2f64.sqrt(), im / 2f64.sqrt())
}

/// Rician matrix for a single link with the given linear gain and
/// end-point steering angles (`phi_rx` for rows, `phi_tx` for columns).
pub fn draw_rician(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    gain: f64,
    phi_rx: f64,
    phi_tx: f64,
    rho: f64,
) -> CMat {
    let amp = gain.sqrt();
    let los_w = (rho / (1.0 + rho)).sqrt();
    let nlos_w = (1.0 / (1.0 + rho)).sqrt();
    let a_rx = steering(rows, phi_rx);
    let a_tx = steering(cols, phi_tx);
    let mut h = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let los = a_rx[i] * a_tx[j].conj();
            h[(i, j)] = amp * (los_w * los + nlos_w * cn01(rng));
        }
    }
    h
}

fn hash_mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Per-link RNG keyed by the master seed, a link tag, and the (quantized)
/// endpoint positions, so channels depend on where a UE is rather than on
/// its index.
fn link_rng(seed: u64, tag: u64, a: (f64, f64), b: (f64, f64)) -> ChaCha8Rng {
    let mut h = hash_mix(seed ^ tag.wrapping_mul(0x9e3779b97f4a7c15));
    for coord in [a.0, a.1, b.0, b.1] {
        h = hash_mix(h ^ (coord * 1024.0).round() as i64 as u64);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Uniform positions in the UE disk (rejection sampling).
pub fn sample_positions(geom: &ScenarioGeometry, count: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let (cx, cy) = geom.cluster_center();
    let r = geom.user_radius;
    (0..count)
        .map(|_| loop {
            let x = rng.gen_range(-r..=r);
            let y = rng.gen_range(-r..=r);
            if x * x + y * y <= r * r {
                break (cx + x, cy + y);
            }
        })
        .collect()
}

/// Generates all eight matrices for one drop, sampling UE positions from the
/// seed. Deterministic per `(geometry, sizes, params, seed)`.
pub fn generate_drop(
    geom: &ScenarioGeometry,
    sizes: &Sizes,
    params: &RicianParams,
    seed: u64,
) -> Result<ChannelSet> {
    geom.validate()?;
    params.validate()?;
    let mut pos_rng = ChaCha8Rng::seed_from_u64(hash_mix(seed ^ 0x706f73));
    let ul = sample_positions(geom, sizes.n, &mut pos_rng);
    let dl = sample_positions(geom, sizes.m, &mut pos_rng);
    generate_drop_with_positions(geom, sizes, params, seed, &ul, &dl)
}

/// As [`generate_drop`] but with explicit UE positions.
pub fn generate_drop_with_positions(
    geom: &ScenarioGeometry,
    sizes: &Sizes,
    params: &RicianParams,
    seed: u64,
    ul: &[(f64, f64)],
    dl: &[(f64, f64)],
) -> Result<ChannelSet> {
    if ul.len() != sizes.n || dl.len() != sizes.m {
        return Err(Error::DimensionMismatch(format!(
            "expected {} UL and {} DL positions, got {} and {}",
            sizes.n,
            sizes.m,
            ul.len(),
            dl.len()
        )));
    }
    let bs = geom.bs_position();
    let ris = geom.ris_position();
    let rho = params.rho;
    let &Sizes { n_t, n_r, k, m, n } = sizes;

    let per_ue_cols = |rows: usize, node: (f64, f64), tag: u64, ues: &[(f64, f64)]| -> Result<CMat> {
        let mut mat = CMat::zeros(rows, ues.len());
        for (idx, &ue) in ues.iter().enumerate() {
            let gain = pathloss_linear(dist(node, ue), params)?;
            let mut rng = link_rng(seed, tag, node, ue);
            let col = draw_rician(&mut rng, rows, 1, gain, angle(node, ue), 0.0, rho);
            mat.set_column(idx, &col.column(0));
        }
        Ok(mat)
    };

    // UL UE -> BS and UL UE -> RIS, one column per UE.
    let u = per_ue_cols(n_r, bs, 1, ul)?;
    let u1 = per_ue_cols(k, ris, 2, ul)?;

    // RIS -> BS (single link).
    let bs_ris_gain = pathloss_linear(dist(bs, ris), params)?;
    let u2 = draw_rician(
        &mut link_rng(seed, 3, ris, bs),
        n_r,
        k,
        bs_ris_gain,
        angle(bs, ris),
        angle(ris, bs),
        rho,
    );

    // BS -> DL UE and RIS -> DL UE, one row per UE.
    let d_rows = per_ue_cols(n_t, bs, 4, dl)?;
    let d = CMat::from_fn(m, n_t, |i, j| d_rows[(j, i)].conj());
    let d2_cols = per_ue_cols(k, ris, 5, dl)?;
    let d2 = CMat::from_fn(m, k, |i, j| d2_cols[(j, i)].conj());

    // BS -> RIS.
    let d1 = draw_rician(
        &mut link_rng(seed, 6, bs, ris),
        k,
        n_t,
        bs_ris_gain,
        angle(ris, bs),
        angle(bs, ris),
        rho,
    );

    // Self-interference: isolation replaces the distance pathloss.
    let si_gain = 10f64.powf(-params.si_isolation_db / 10.0);
    let s = draw_rician(&mut link_rng(seed, 7, bs, bs), n_r, n_t, si_gain, 0.0, 0.0, rho);

    // CCI: scalar link per (DL UE, UL UE) pair; UEs share a disk, so clamp
    // the distance at 1 m to keep the pathloss finite.
    let mut v = CMat::zeros(m, n);
    for (col, &u_pos) in ul.iter().enumerate() {
        for (row, &d_pos) in dl.iter().enumerate() {
            let gain = pathloss_linear(dist(u_pos, d_pos).max(1.0), params)?;
            let mut rng = link_rng(seed, 8, u_pos, d_pos);
            v[(row, col)] = draw_rician(&mut rng, 1, 1, gain, 0.0, 0.0, rho)[(0, 0)];
        }
    }

    Ok(ChannelSet {
        sizes: *sizes,
        u,
        u1,
        u2,
        d,
        d1,
        d2,
        s,
        v,
    })
}

impl ChannelSet {
    /// Copy with all RIS-side matrices emptied (`K = 0`).
    pub fn without_ris(&self) -> ChannelSet {
        let sizes = Sizes { k: 0, ..self.sizes };
        ChannelSet {
            sizes,
            u: self.u.clone(),
            u1: CMat::zeros(0, self.sizes.n),
            u2: CMat::zeros(self.sizes.n_r, 0),
            d: self.d.clone(),
            d1: CMat::zeros(0, self.sizes.n_t),
            d2: CMat::zeros(self.sizes.m, 0),
            s: self.s.clone(),
            v: self.v.clone(),
        }
    }
}

// JSON replay format: complex entries as [re, im] pairs, row-major.
#[derive(Serialize, Deserialize)]
struct CMatJson {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

impl From<&CMat> for CMatJson {
    fn from(m: &CMat) -> Self {
        let mut entries = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                entries.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }
}

impl CMatJson {
    fn to_mat(&self) -> Result<CMat> {
        if self.entries.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch(format!(
                "channel json: {}x{} with {} entries",
                self.rows,
                self.cols,
                self.entries.len()
            )));
        }
        Ok(CMat::from_fn(self.rows, self.cols, |i, j| {
            let [re, im] = self.entries[i * self.cols + j];
            Complex64::new(re, im)
        }))
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelSetJson {
    sizes: Sizes,
    u: CMatJson,
    u1: CMatJson,
    u2: CMatJson,
    d: CMatJson,
    d1: CMatJson,
    d2: CMatJson,
    s: CMatJson,
    v: CMatJson,
}

impl ChannelSet {
    pub fn to_json(&self) -> Result<String> {
        let j = ChannelSetJson {
            sizes: self.sizes,
            u: (&self.u).into(),
            u1: (&self.u1).into(),
            u2: (&self.u2).into(),
            d: (&self.d).into(),
            d1: (&self.d1).into(),
            d2: (&self.d2).into(),
            s: (&self.s).into(),
            v: (&self.v).into(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(text: &str) -> Result<ChannelSet> {
        let j: ChannelSetJson = serde_json::from_str(text)?;
        let set = ChannelSet {
            sizes: j.sizes,
            u: j.u.to_mat()?,
            u1: j.u1.to_mat()?,
            u2: j.u2.to_mat()?,
            d: j.d.to_mat()?,
            d1: j.d1.to_mat()?,
            d2: j.d2.to_mat()?,
            s: j.s.to_mat()?,
            v: j.v.to_mat()?,
        };
        let sz = &set.sizes;
        let dims_ok = set.u.shape() == (sz.n_r, sz.n)
            && set.u1.shape() == (sz.k, sz.n)
            && set.u2.shape() == (sz.n_r, sz.k)
            && set.d.shape() == (sz.m, sz.n_t)
            && set.d1.shape() == (sz.k, sz.n_t)
            && set.d2.shape() == (sz.m, sz.k)
            && set.s.shape() == (sz.n_r, sz.n_t)
            && set.v.shape() == (sz.m, sz.n);
        if !dims_ok {
            return Err(Error::DimensionMismatch(
                "channel json dimensions inconsistent with sizes".into(),
            ));
        }
        Ok(set)
    }
}

/// Mean DL-UE direct-link gain; used by sanity checks and reporting.
pub fn mean_entry_power(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.norm_squared() / (m.nrows() * m.ncols()) as f64
}
