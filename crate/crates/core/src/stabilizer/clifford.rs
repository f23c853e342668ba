//! The 24-element single-qubit Clifford group (modulo global phase).

use std::sync::OnceLock;

use rand::Rng;

use crate::linalg::{C64, I, ONE, ZERO};

/// Row-major 2x2 matrix.
pub type Mat2 = [C64; 4];

/// Images of `X` and `Z` under conjugation `C P C^dagger`, as
/// `(x bit, z bit, phase)` of the Hermitian single-site Pauli.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PauliImage {
    pub x: bool,
    pub z: bool,
    pub phase: u8,
}

#[derive(Clone, Debug)]
pub struct SingleQubitClifford {
    pub matrix: Mat2,
    pub image_x: PauliImage,
    pub image_z: PauliImage,
}

pub const GROUP_ORDER: usize = 24;

fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn adjoint(a: &Mat2) -> Mat2 {
    [a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()]
}

/// Fix the global phase so the first entry with non-negligible modulus is
/// real and positive.
fn canonical(a: &Mat2) -> Mat2 {
    let lead = a.iter().find(|z| z.norm() > 1e-9).copied().unwrap_or(ONE);
    let ph = lead.conj() / lead.norm();
    [a[0] * ph, a[1] * ph, a[2] * ph, a[3] * ph]
}

fn same(a: &Mat2, b: &Mat2) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).norm() < 1e-9)
}

fn pauli_matrix(x: bool, z: bool) -> Mat2 {
    match (x, z) {
        (false, false) => [ONE, ZERO, ZERO, ONE],
        (true, false) => [ZERO, ONE, ONE, ZERO],
        (true, true) => [ZERO, -I, I, ZERO],
        (false, true) => [ONE, ZERO, ZERO, -ONE],
    }
}

fn identify(m: &Mat2) -> PauliImage {
    for (x, z) in [(true, false), (true, true), (false, true)] {
        let p = pauli_matrix(x, z);
        for phase in [0u8, 2] {
            let s = if phase == 0 { 1.0 } else { -1.0 };
            let q = [p[0] * s, p[1] * s, p[2] * s, p[3] * s];
            if same(m, &q) {
                return PauliImage { x, z, phase };
            }
        }
    }
    unreachable!("conjugate of a Pauli by a Clifford is a signed Pauli")
}

fn build() -> Vec<SingleQubitClifford> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h: Mat2 = [C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)];
    let ph: Mat2 = [ONE, ZERO, ZERO, I];
    let mut elems: Vec<Mat2> = vec![[ONE, ZERO, ZERO, ONE]];
    let mut k = 0;
    while k < elems.len() {
        for g in [&h, &ph] {
            let m = canonical(&mul(g, &elems[k]));
            if !elems.iter().any(|e| same(e, &m)) {
                elems.push(m);
            }
        }
        k += 1;
    }
    assert_eq!(elems.len(), GROUP_ORDER);
    elems
        .into_iter()
        .map(|m| {
            let md = adjoint(&m);
            let image_x = identify(&mul(&mul(&m, &pauli_matrix(true, false)), &md));
            let image_z = identify(&mul(&mul(&m, &pauli_matrix(false, true)), &md));
            SingleQubitClifford { matrix: m, image_x, image_z }
        })
        .collect()
}

pub fn group() -> &'static [SingleQubitClifford] {
    static GROUP: OnceLock<Vec<SingleQubitClifford>> = OnceLock::new();
    GROUP.get_or_init(build)
}

/// Index of the inverse element.
pub fn inverse_index(idx: u8) -> u8 {
    static INV: OnceLock<Vec<u8>> = OnceLock::new();
    INV.get_or_init(|| {
        let g = group();
        (0..GROUP_ORDER)
            .map(|i| {
                let target = canonical(&adjoint(&g[i].matrix));
                g.iter().position(|e| same(&e.matrix, &target)).expect("group is closed") as u8
            })
            .collect()
    })[idx as usize]
}

/// Index of the Hadamard gate.
pub fn hadamard_index() -> u8 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h: Mat2 = [C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)];
    index_of(&h)
}

/// Index of the phase gate `diag(1, i)`.
pub fn phase_index() -> u8 {
    index_of(&[ONE, ZERO, ZERO, I])
}

fn index_of(m: &Mat2) -> u8 {
    let c = canonical(m);
    group().iter().position(|e| same(&e.matrix, &c)).expect("Clifford element") as u8
}

/// Uniform element of the group.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    rng.random_range(0..GROUP_ORDER as u8)
}
