//! Thin Python bindings over the arkworks BLS12-381 pairing groups.
//!
//! Exposes the group law, scalar multiplication, compressed encodings with
//! subgroup checks, the optimal-ate pairing and GT exponentiation, plus a
//! native path for the key-puncturing inner loop (Bloom positions, bit
//! setting and share erasure).

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::scalar_mul::fixed_base::FixedBase;
use ark_ec::{CurveGroup, Group};
use ark_ff::{BigInteger, PrimeField, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use num_bigint::{BigInt, BigUint, Sign};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyByteArray, PyBytes};
use sha2::{Digest, Sha384};

type Gt = PairingOutput<Bls12_381>;

fn modulus() -> BigUint {
    BigUint::from_bytes_le(&Fr::MODULUS.to_bytes_le())
}

fn to_fr(x: BigInt) -> Fr {
    let r = BigInt::from_biguint(Sign::Plus, modulus());
    let mut v = x % &r;
    if v.sign() == Sign::Minus {
        v += &r;
    }
    let (_, mag) = v.into_parts();
    Fr::from(mag)
}

fn encode<T: CanonicalSerialize>(v: &T) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.compressed_size());
    v.serialize_compressed(&mut out).expect("serialization into Vec cannot fail");
    out
}

/// Decode and insist on the canonical encoding; arkworks alone accepts any
/// bit pattern after a set infinity flag.
fn decode<T: CanonicalSerialize + CanonicalDeserialize>(data: &[u8], what: &str) -> PyResult<T> {
    let v = T::deserialize_compressed(data)
        .map_err(|e| PyValueError::new_err(format!("invalid {what} encoding: {e}")))?;
    if encode(&v) != data {
        return Err(PyValueError::new_err(format!("non-canonical {what} encoding")));
    }
    Ok(v)
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

#[pyclass(frozen, module = "pspos._native")]
#[derive(Clone)]
struct G1 {
    inner: G1Projective,
}

#[pymethods]
impl G1 {
    #[staticmethod]
    fn generator() -> Self {
        G1 { inner: G1Projective::generator() }
    }

    #[staticmethod]
    fn identity() -> Self {
        G1 { inner: G1Projective::zero() }
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        decode::<G1Affine>(data, "G1").map(|p| G1 { inner: p.into() })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new_bound(py, &encode(&self.inner.into_affine()))
    }

    fn is_identity(&self) -> bool {
        self.inner.is_zero()
    }

    fn __add__(&self, other: &G1) -> G1 {
        G1 { inner: self.inner + other.inner }
    }

    fn __sub__(&self, other: &G1) -> G1 {
        G1 { inner: self.inner - other.inner }
    }

    fn __neg__(&self) -> G1 {
        G1 { inner: -self.inner }
    }

    fn __mul__(&self, k: BigInt) -> G1 {
        G1 { inner: self.inner * to_fr(k) }
    }

    fn __rmul__(&self, k: BigInt) -> G1 {
        self.__mul__(k)
    }

    fn __eq__(&self, other: &G1) -> bool {
        self.inner == other.inner
    }

    fn __hash__(&self) -> u64 {
        digest(&encode(&self.inner.into_affine()))
    }

    fn __repr__(&self) -> String {
        format!("G1({})", hex(&encode(&self.inner.into_affine())))
    }
}

#[pyclass(frozen, module = "pspos._native")]
#[derive(Clone)]
struct G2 {
    inner: G2Projective,
}

#[pymethods]
impl G2 {
    #[staticmethod]
    fn generator() -> Self {
        G2 { inner: G2Projective::generator() }
    }

    #[staticmethod]
    fn identity() -> Self {
        G2 { inner: G2Projective::zero() }
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        decode::<G2Affine>(data, "G2").map(|p| G2 { inner: p.into() })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new_bound(py, &encode(&self.inner.into_affine()))
    }

    fn is_identity(&self) -> bool {
        self.inner.is_zero()
    }

    fn __add__(&self, other: &G2) -> G2 {
        G2 { inner: self.inner + other.inner }
    }

    fn __sub__(&self, other: &G2) -> G2 {
        G2 { inner: self.inner - other.inner }
    }

    fn __neg__(&self) -> G2 {
        G2 { inner: -self.inner }
    }

    fn __mul__(&self, k: BigInt) -> G2 {
        G2 { inner: self.inner * to_fr(k) }
    }

    fn __rmul__(&self, k: BigInt) -> G2 {
        self.__mul__(k)
    }

    fn __eq__(&self, other: &G2) -> bool {
        self.inner == other.inner
    }

    fn __hash__(&self) -> u64 {
        digest(&encode(&self.inner.into_affine()))
    }

    fn __repr__(&self) -> String {
        format!("G2({})", hex(&encode(&self.inner.into_affine())))
    }
}

/// Target group element, written multiplicatively on the Python side.
#[pyclass(frozen, module = "pspos._native")]
#[derive(Clone)]
struct GT {
    inner: Gt,
}

#[pymethods]
impl GT {
    #[staticmethod]
    fn identity() -> Self {
        GT { inner: Gt::zero() }
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        decode::<Gt>(data, "GT").map(|v| GT { inner: v })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new_bound(py, &encode(&self.inner))
    }

    fn is_identity(&self) -> bool {
        self.inner.is_zero()
    }

    fn __mul__(&self, other: &GT) -> GT {
        GT { inner: self.inner + other.inner }
    }

    fn __truediv__(&self, other: &GT) -> GT {
        GT { inner: self.inner - other.inner }
    }

    fn __pow__(&self, k: BigInt, modulo: Option<PyObject>) -> PyResult<GT> {
        if modulo.is_some() {
            return Err(PyValueError::new_err("modular pow is not defined on GT"));
        }
        Ok(GT { inner: self.inner * to_fr(k) })
    }

    fn __eq__(&self, other: &GT) -> bool {
        self.inner == other.inner
    }

    fn __hash__(&self) -> u64 {
        digest(&encode(&self.inner))
    }

    fn __repr__(&self) -> String {
        let b = encode(&self.inner);
        format!("GT({}...)", hex(&b[..16]))
    }
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

#[pyfunction]
fn pairing(a: &G1, b: &G2) -> GT {
    GT { inner: Bls12_381::pairing(a.inner, b.inner) }
}

/// Product of pairings, sharing one final exponentiation.
#[pyfunction]
fn multi_pairing(pairs: Vec<(G1, G2)>) -> GT {
    let (a, b): (Vec<G1Affine>, Vec<G2Affine>) = pairs
        .iter()
        .map(|(p, q)| (p.inner.into_affine(), q.inner.into_affine()))
        .unzip();
    GT { inner: Bls12_381::multi_pairing(a, b) }
}

/// Multiply one G1 base by many scalars; returns the concatenated
/// compressed encodings (48 bytes each) in input order.
#[pyfunction]
fn g1_batch_mul<'py>(py: Python<'py>, base: &G1, scalars: Vec<BigInt>) -> Bound<'py, PyBytes> {
    let frs: Vec<Fr> = scalars.into_iter().map(to_fr).collect();
    let out = py.allow_threads(|| {
        let bits = Fr::MODULUS_BIT_SIZE as usize;
        let window = FixedBase::get_mul_window_size(frs.len());
        let table = FixedBase::get_window_table::<G1Projective>(bits, window, base.inner);
        let points = FixedBase::msm::<G1Projective>(bits, window, &table, &frs);
        let affine = G1Projective::normalize_batch(&points);
        let mut buf = Vec::with_capacity(affine.len() * 48);
        for p in &affine {
            p.serialize_compressed(&mut buf).expect("serialization into Vec cannot fail");
        }
        buf
    });
    PyBytes::new_bound(py, &out)
}

fn reduce_be(bytes: &[u8], m: u64) -> u64 {
    bytes.iter().fold(0u128, |r, &b| ((r << 8) | b as u128) % m as u128) as u64
}

/// Distinct double-hashing positions `(a + j*b) mod l + 1`, `j = 1..k`, where
/// `a`, `b` are the halves of SHA-384(seed || u). Mirrors `BloomFilter.positions`.
fn km_positions(seed: &[u8], u: &[u8], ell: u64, k: u32) -> Vec<u64> {
    let d = Sha384::new().chain_update(seed).chain_update(u).finalize();
    let a = reduce_be(&d[..24], ell) as u128;
    let b = reduce_be(&d[24..], ell) as u128;
    let mut out: Vec<u64> = Vec::with_capacity(k as usize);
    for j in 1..=k as u128 {
        let p = ((a + j * b) % ell as u128) as u64 + 1;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

#[pyfunction]
fn bloom_positions(seed: &[u8], u: &[u8], ell: u64, k: u32) -> PyResult<Vec<u64>> {
    if ell == 0 || k == 0 {
        return Err(PyValueError::new_err("l and k must be positive"));
    }
    Ok(km_positions(seed, u, ell, k))
}

/// Set the Bloom bits of `u` and zero the `width`-byte share at each position.
#[pyfunction]
fn bloom_puncture(
    bits: &Bound<'_, PyByteArray>,
    shares: &Bound<'_, PyByteArray>,
    seed: &[u8],
    u: &[u8],
    ell: u64,
    k: u32,
    width: usize,
) -> PyResult<Vec<u64>> {
    if ell == 0 || k == 0 {
        return Err(PyValueError::new_err("l and k must be positive"));
    }
    if bits.len() < ell.div_ceil(8) as usize || shares.len() < ell as usize * width {
        return Err(PyValueError::new_err("buffers are smaller than l"));
    }
    let pos = km_positions(seed, u, ell, k);
    // SAFETY: the GIL is held and no other reference to either buffer's
    // contents escapes this function, so the slices are not resized or aliased.
    let (bits, shares) = unsafe { (bits.as_bytes_mut(), shares.as_bytes_mut()) };
    for &p in &pos {
        let i = (p - 1) as usize;
        bits[i >> 3] |= 1 << (i & 7);
        shares[i * width..(i + 1) * width].fill(0);
    }
    Ok(pos)
}

#[pyfunction]
fn group_order() -> BigUint {
    modulus()
}

#[pymodule]
fn _native(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<G1>()?;
    m.add_class::<G2>()?;
    m.add_class::<GT>()?;
    m.add_function(wrap_pyfunction!(pairing, m)?)?;
    m.add_function(wrap_pyfunction!(multi_pairing, m)?)?;
    m.add_function(wrap_pyfunction!(g1_batch_mul, m)?)?;
    m.add_function(wrap_pyfunction!(group_order, m)?)?;
    m.add_function(wrap_pyfunction!(bloom_positions, m)?)?;
    m.add_function(wrap_pyfunction!(bloom_puncture, m)?)?;
    Ok(())
}
