//! Port impedance matrix, Z→S conversion and the loaded-surface channel.

use super::dipole::{mutual_impedance, self_impedance, DipoleSpec};
use crate::error::{Error, Result};
use crate::scenario::{array_response, Direction, MtpGeometry};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Condition number above which a warning is logged.
pub const CONDITION_WARN: f64 = 1e8;
/// Condition number treated as numerically singular.
pub const CONDITION_FAIL: f64 = 1e14;

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverts `m`, failing with a condition report when it is singular.
pub(crate) fn checked_inverse(m: &CMatrix, context: &str) -> Result<CMatrix> {
    let inv = m.clone().lu().try_inverse();
    let cond = condition_number(m);
    if cond > CONDITION_WARN {
        log::warn!("{context}: condition number {cond:e}");
    }
    match inv {
        Some(inv)
            if cond <= CONDITION_FAIL
                && inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) =>
        {
            Ok(inv)
        }
        _ => Err(Error::Singular {
            context: context.to_string(),
            condition: cond,
        }),
    }
}

/// How two parallel dipoles are arranged relative to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairConfiguration {
    SideBySide,
    Collinear,
    Echelon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    pub separation: f64,
    /// Distance perpendicular to the wires.
    pub lateral: f64,
    /// Offset along the wires.
    pub axial: f64,
    pub configuration: PairConfiguration,
}

/// Impedance matrix of the ports `(TX, element 0..N−1, RX)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceMatrix {
    z: CMatrix,
    ports: Vec<[f64; 3]>,
    spec: DipoleSpec,
    freq_hz: f64,
}

impl ImpedanceMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.z
    }

    pub fn ports(&self) -> &[[f64; 3]] {
        &self.ports
    }

    pub fn port_count(&self) -> usize {
        self.ports.len()
    }

    pub fn element_count(&self) -> usize {
        self.ports.len() - 2
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn spec(&self) -> &DipoleSpec {
        &self.spec
    }

    /// Drops the transmitter–receiver mutual impedance (blocked direct path).
    pub fn without_direct_link(mut self) -> Self {
        let last = self.ports.len() - 1;
        self.z[(0, last)] = Complex64::new(0.0, 0.0);
        self.z[(last, 0)] = Complex64::new(0.0, 0.0);
        self
    }

    pub fn pair(&self, a: usize, b: usize) -> PairGeometry {
        let (lateral, axial) = self.spec.decompose(self.ports[a], self.ports[b]);
        let tol = 1e-9 * self.spec.length;
        let configuration = if axial.abs() <= tol {
            PairConfiguration::SideBySide
        } else if lateral <= tol {
            PairConfiguration::Collinear
        } else {
            PairConfiguration::Echelon
        };
        PairGeometry {
            separation: lateral.hypot(axial),
            lateral,
            axial,
            configuration,
        }
    }
}

fn impedance_block(spec: &DipoleSpec, ports: &[[f64; 3]], freq_hz: f64) -> Result<CMatrix> {
    let n = ports.len();
    let zs = self_impedance(spec, freq_hz)?;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(a, b)| mutual_impedance(spec, ports[a], ports[b], freq_hz))
        .collect::<Result<Vec<_>>>()?;
    let mut z = CMatrix::from_diagonal_element(n, n, zs);
    for (&(a, b), v) in pairs.iter().zip(values) {
        z[(a, b)] = v;
        z[(b, a)] = v;
    }
    Ok(z)
}

pub fn build_impedance_matrix(
    geom: &MtpGeometry,
    tx: [f64; 3],
    rx: [f64; 3],
    spec: &DipoleSpec,
    freq_hz: f64,
) -> Result<ImpedanceMatrix> {
    let mut ports = Vec::with_capacity(geom.len() + 2);
    ports.push(tx);
    ports.extend_from_slice(geom.positions());
    ports.push(rx);
    let z = impedance_block(spec, &ports, freq_hz)?;
    Ok(ImpedanceMatrix {
        z,
        ports,
        spec: *spec,
        freq_hz,
    })
}

/// `S = (Z + Z0 I)⁻¹ (Z − Z0 I)`.
pub fn z_to_s(z: &CMatrix, z0: f64) -> Result<CMatrix> {
    let n = z.nrows();
    let id = CMatrix::identity(n, n);
    let inv = checked_inverse(&(z + &id * Complex64::from(z0)), "Z + Z0·I")?;
    Ok(&id - inv * Complex64::from(2.0 * z0))
}

/// `Z = Z0 (I + S)(I − S)⁻¹`.
pub fn s_to_z(s: &CMatrix, z0: f64) -> Result<CMatrix> {
    let n = s.nrows();
    let id = CMatrix::identity(n, n);
    let inv = checked_inverse(&(&id - s), "I − S")?;
    Ok((&id + s) * inv * Complex64::from(z0))
}

/// Scattering blocks seen by one transmitter/receiver pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiportNetwork {
    pub s_rt: Complex64,
    /// Row vector `s_RM`, stored as a column.
    pub s_rm: CVector,
    pub s_mt: CVector,
    pub s_ss: CMatrix,
    pub z0: f64,
    pub freq_hz: f64,
}

impl MultiportNetwork {
    /// Partitions a full `(N+2)`-port scattering matrix in port order
    /// `(TX, elements, RX)`.
    pub fn from_scattering(s: &CMatrix, z0: f64, freq_hz: f64) -> Result<Self> {
        let p = s.nrows();
        if p < 3 || s.ncols() != p {
            return Err(Error::validation(
                "scattering matrix must be square with at least three ports",
            ));
        }
        let n = p - 2;
        Ok(Self {
            s_rt: s[(p - 1, 0)],
            s_rm: CVector::from_iterator(n, (1..=n).map(|j| s[(p - 1, j)])),
            s_mt: CVector::from_iterator(n, (1..=n).map(|i| s[(i, 0)])),
            s_ss: s.view((1, 1), (n, n)).into_owned(),
            z0,
            freq_hz,
        })
    }

    /// Uncoupled network with no structural scattering.
    pub fn ideal(s_rm: CVector, s_mt: CVector, z0: f64, freq_hz: f64) -> Result<Self> {
        if s_rm.len() != s_mt.len() {
            return Err(Error::validation("s_RM and s_MT lengths differ"));
        }
        let n = s_rm.len();
        Ok(Self {
            s_rt: Complex64::new(0.0, 0.0),
            s_rm,
            s_mt,
            s_ss: CMatrix::zeros(n, n),
            z0,
            freq_hz,
        })
    }

    /// Plane-wave links: `s_MT = g a(Θ_inc)`, `s_RM = g aᵀ(Θ)`.
    pub fn far_field(
        geom: &MtpGeometry,
        incidence: Direction,
        user: Direction,
        freq_hz: f64,
        gain: f64,
        z0: f64,
    ) -> Result<Self> {
        let a_in = array_response(geom, incidence, freq_hz)?;
        let a_out = array_response(geom, user, freq_hz)?;
        Self::ideal(
            CVector::from_iterator(geom.len(), a_out.into_iter().map(|a| a * gain)),
            CVector::from_iterator(geom.len(), a_in.into_iter().map(|a| a * gain)),
            z0,
            freq_hz,
        )
    }

    pub fn len(&self) -> usize {
        self.s_mt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_mt.is_empty()
    }

    /// Drops the off-diagonal (inter-element) part of `S_SS`.
    pub fn without_coupling(mut self) -> Self {
        let d = self.s_ss.diagonal();
        self.s_ss = CMatrix::from_diagonal(&d);
        self
    }

    /// Drops `s_RT` and the self-scattering diagonal of `S_SS`.
    pub fn without_structural(mut self) -> Self {
        self.s_rt = Complex64::new(0.0, 0.0);
        self.s_ss.fill_diagonal(Complex64::new(0.0, 0.0));
        self
    }

    /// Largest singular value of `S_SS`.
    pub fn s_ss_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.s_ss
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    pub fn channel(&self, gamma: &[Complex64]) -> Result<Complex64> {
        realistic_channel(self, gamma)
    }
}

/// Converts an impedance matrix and partitions the result.
pub fn z_to_s_partition(z: &ImpedanceMatrix, z0: f64) -> Result<MultiportNetwork> {
    let s = z_to_s(z.matrix(), z0)?;
    MultiportNetwork::from_scattering(&s, z0, z.freq_hz())
}

/// `h̃ = s_RT + s_RM (Γ⁻¹ − S_SS)⁻¹ s_MT`.
pub fn realistic_channel(net: &MultiportNetwork, gamma: &[Complex64]) -> Result<Complex64> {
    let n = net.len();
    if gamma.len() != n {
        return Err(Error::validation(format!(
            "reflection vector has {} entries for {n} elements",
            gamma.len()
        )));
    }
    if gamma.iter().any(|g| (g.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::validation(
            "reflection coefficients must have unit modulus",
        ));
    }
    let mut m = -net.s_ss.clone();
    for (i, g) in gamma.iter().enumerate() {
        m[(i, i)] += g.inv();
    }
    let y = m
        .lu()
        .solve(&net.s_mt)
        .filter(|y| y.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    match y {
        Some(y) => Ok(net.s_rt + net.s_rm.dot(&y)),
        None => Err(Error::Singular {
            context: format!("Γ⁻¹ − S_SS at {} Hz", net.freq_hz),
            condition: f64::INFINITY,
        }),
    }
}

/// Caches the transmitter and element block so networks for many receiver
/// positions cost `O(N²)` each (bordered inverse).
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    spec: DipoleSpec,
    freq_hz: f64,
    z0: f64,
    ports: Vec<[f64; 3]>,
    z_self: Complex64,
    /// `(Z₁₁ + Z0 I)⁻¹` over `(TX, elements)`.
    a11_inv: CMatrix,
    direct_link: bool,
}

impl NetworkBuilder {
    pub fn new(
        geom: &MtpGeometry,
        tx: [f64; 3],
        spec: &DipoleSpec,
        freq_hz: f64,
        z0: f64,
    ) -> Result<Self> {
        let mut ports = Vec::with_capacity(geom.len() + 1);
        ports.push(tx);
        ports.extend_from_slice(geom.positions());
        let mut a11 = impedance_block(spec, &ports, freq_hz)?;
        let z_self = a11[(0, 0)];
        for i in 0..ports.len() {
            a11[(i, i)] += z0;
        }
        let a11_inv = checked_inverse(&a11, "Z + Z0·I (transmitter and elements)")?;
        Ok(Self {
            spec: *spec,
            freq_hz,
            z0,
            ports,
            z_self,
            a11_inv,
            direct_link: true,
        })
    }

    /// Includes or drops the transmitter–receiver mutual impedance.
    pub fn with_direct_link(mut self, on: bool) -> Self {
        self.direct_link = on;
        self
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn element_count(&self) -> usize {
        self.ports.len() - 1
    }

    /// Network with the receiver at `rx`.
    pub fn network(&self, rx: [f64; 3]) -> Result<MultiportNetwork> {
        let m = self.ports.len();
        let n = m - 1;
        let b = self
            .ports
            .iter()
            .map(|&p| mutual_impedance(&self.spec, p, rx, self.freq_hz))
            .collect::<Result<Vec<_>>>()?;
        let mut b = CVector::from_vec(b);
        if !self.direct_link {
            b[0] = Complex64::new(0.0, 0.0);
        }
        let v = &self.a11_inv * &b;
        let schur = self.z_self + self.z0 - b.dot(&v);
        if schur.norm() < f64::EPSILON * (self.z_self.norm() + self.z0) {
            return Err(Error::Singular {
                context: "receiver border of Z + Z0·I".into(),
                condition: f64::INFINITY,
            });
        }
        let two_z0 = Complex64::from(2.0 * self.z0);
        let scale = two_z0 / schur;
        // rows/cols 1..=n of (A⁻¹ + v vᵀ / s)
        let mut s_ss = CMatrix::from_fn(n, n, |i, j| {
            -(self.a11_inv[(i + 1, j + 1)] + v[i + 1] * v[j + 1] / schur) * two_z0
        });
        for i in 0..n {
            s_ss[(i, i)] += one();
        }
        let s_mt = CVector::from_fn(n, |i, _| {
            -(self.a11_inv[(i + 1, 0)] + v[i + 1] * v[0] / schur) * two_z0
        });
        let s_rm = CVector::from_fn(n, |i, _| v[i + 1] * scale);
        Ok(MultiportNetwork {
            s_rt: v[0] * scale,
            s_rm,
            s_mt,
            s_ss,
            z0: self.z0,
            freq_hz: self.freq_hz,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideal::{ideal_channel_gain, reflection_coefficient};
    use crate::scenario::Scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_scenario() -> (MtpGeometry, DipoleSpec, [f64; 3], [f64; 3], f64) {
        let s = Scenario::default();
        let lambda0 = s.lambda0();
        let geom = MtpGeometry::centered(4, 2, lambda0 / 2.0, 0.75 * lambda0).unwrap();
        let spec = DipoleSpec::reference(s.f0);
        (geom, spec, s.tx_position(), s.user_position(0.6), s.f0)
    }

    #[test]
    fn matched_and_diagonal_cases() {
        let z = CMatrix::identity(3, 3) * Complex64::from(50.0);
        assert!(z_to_s(&z, 50.0).unwrap().iter().all(|v| v.norm() < 1e-15));
        let xs = [10.0, -30.0, 75.0];
        let z = CMatrix::from_diagonal(&CVector::from_iterator(
            3,
            xs.iter().map(|&x| Complex64::new(0.0, x)),
        ));
        let s = z_to_s(&z, 50.0).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            assert!((s[(i, i)] - reflection_coefficient(x, 50.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn round_trip_and_symmetry() {
        let (geom, spec, tx, rx, f0) = small_scenario();
        let z = build_impedance_matrix(&geom, tx, rx, &spec, f0).unwrap();
        assert_eq!(z.port_count(), 10);
        assert_eq!(z.matrix(), &z.matrix().transpose());
        assert!(z.matrix().diagonal().iter().all(|v| v.re > 0.0));
        let s = z_to_s(z.matrix(), 50.0).unwrap();
        let back = s_to_z(&s, 50.0).unwrap();
        let err = (&back - z.matrix()).norm() / z.matrix().norm();
        assert!(err < 1e-9, "{err}");
        let net = z_to_s_partition(&z, 50.0).unwrap();
        let asym = (&net.s_ss - net.s_ss.transpose()).norm() / net.s_ss.norm();
        assert!(asym < 1e-10);
        assert!(net.s_ss_norm() < 1.0);
    }

    #[test]
    fn pair_annotations() {
        let (geom, spec, tx, rx, f0) = small_scenario();
        let z = build_impedance_matrix(&geom, tx, rx, &spec, f0).unwrap();
        assert_eq!(z.pair(1, 2).configuration, PairConfiguration::SideBySide);
        assert_eq!(z.pair(1, 5).configuration, PairConfiguration::Collinear);
        assert_eq!(z.pair(1, 6).configuration, PairConfiguration::Echelon);
    }

    #[test]
    fn bordered_builder_matches_full_conversion() {
        let (geom, spec, tx, rx, f0) = small_scenario();
        let full = z_to_s_partition(
            &build_impedance_matrix(&geom, tx, rx, &spec, f0).unwrap(),
            50.0,
        )
        .unwrap();
        let fast = NetworkBuilder::new(&geom, tx, &spec, f0, 50.0)
            .unwrap()
            .network(rx)
            .unwrap();
        assert!((full.s_rt - fast.s_rt).norm() < 1e-12);
        assert!((&full.s_rm - &fast.s_rm).norm() < 1e-12);
        assert!((&full.s_mt - &fast.s_mt).norm() < 1e-12);
        assert!((&full.s_ss - &fast.s_ss).norm() < 1e-12);

        let full = z_to_s_partition(
            &build_impedance_matrix(&geom, tx, rx, &spec, f0)
                .unwrap()
                .without_direct_link(),
            50.0,
        )
        .unwrap();
        let fast = NetworkBuilder::new(&geom, tx, &spec, f0, 50.0)
            .unwrap()
            .with_direct_link(false)
            .network(rx)
            .unwrap();
        assert!((full.s_rt - fast.s_rt).norm() < 1e-12);
        assert!((&full.s_ss - &fast.s_ss).norm() < 1e-12);
    }

    #[test]
    fn reciprocity_swaps_links() {
        let (geom, spec, tx, rx, f0) = small_scenario();
        let a = z_to_s_partition(
            &build_impedance_matrix(&geom, tx, rx, &spec, f0).unwrap(),
            50.0,
        )
        .unwrap();
        let b = z_to_s_partition(
            &build_impedance_matrix(&geom, rx, tx, &spec, f0).unwrap(),
            50.0,
        )
        .unwrap();
        assert!((&a.s_mt - &b.s_rm).norm() < 1e-12);
        assert!((&a.s_rm - &b.s_mt).norm() < 1e-12);
        assert!((a.s_rt - b.s_rt).norm() < 1e-14);
    }

    #[test]
    fn single_element_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let c = |rng: &mut ChaCha8Rng| {
                Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
            };
            let net = MultiportNetwork {
                s_rt: c(&mut rng),
                s_rm: CVector::from_element(1, c(&mut rng)),
                s_mt: CVector::from_element(1, c(&mut rng)),
                s_ss: CMatrix::from_element(1, 1, c(&mut rng)),
                z0: 50.0,
                freq_hz: 1e9,
            };
            let psi: f64 = rng.random_range(0.0..6.0);
            let h = realistic_channel(&net, &[Complex64::from_polar(1.0, psi)]).unwrap();
            let expected = net.s_rt
                + net.s_rm[0] * net.s_mt[0] / (Complex64::from_polar(1.0, -psi) - net.s_ss[(0, 0)]);
            assert!((h - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn degenerates_to_ideal_channel() {
        let s = Scenario::default();
        let geom = &s.geometry;
        let f = 3.61e9;
        let user = Direction::new(0.8, 0.0).unwrap();
        let gamma: Vec<Complex64> = (0..geom.len())
            .map(|n| Complex64::from_polar(1.0, 0.37 * n as f64))
            .collect();
        let net = MultiportNetwork::far_field(geom, s.incidence, user, f, 1.0, 50.0).unwrap();
        let h = realistic_channel(&net, &gamma).unwrap();
        let h_ideal = ideal_channel_gain(geom, &gamma, s.incidence, user, f, 1.0).unwrap();
        assert!((h - h_ideal).norm() <= 1e-9 * h_ideal.norm().max(1.0));
    }

    #[test]
    fn channel_respects_norm_bound() {
        let (geom, spec, tx, rx, f0) = small_scenario();
        let net = z_to_s_partition(
            &build_impedance_matrix(&geom, tx, rx, &spec, f0).unwrap(),
            50.0,
        )
        .unwrap();
        let rho = net.s_ss_norm();
        assert!(rho < 1.0);
        // |s_RT| + ‖s_RM‖‖(Γ⁻¹ − S_SS)⁻¹‖‖s_MT‖ with ‖(Γ⁻¹ − S_SS)⁻¹‖ ≤ 1/(1 − ‖S_SS‖)
        let bound = net.s_rt.norm() + net.s_rm.norm() * net.s_mt.norm() / (1.0 - rho);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let gamma: Vec<Complex64> = (0..geom.len())
                .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..6.3)))
                .collect();
            let h = realistic_channel(&net, &gamma).unwrap();
            assert!(h.norm() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rejects_non_unit_reflections() {
        let net = MultiportNetwork::ideal(
            CVector::from_element(1, one()),
            CVector::from_element(1, one()),
            50.0,
            1e9,
        )
        .unwrap();
        assert!(realistic_channel(&net, &[Complex64::new(0.5, 0.0)]).is_err());
        assert!(realistic_channel(&net, &[one(), one()]).is_err());
    }
}
