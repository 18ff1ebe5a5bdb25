//! Received signal and local mean power of the cascaded-coupling channel.
//!
//! A channel is a receive ray vector `a` (length N), a transmit ray vector
//! `b` (length M) and coupling layers `S₁ … S_K`. The received signal is the
//! bilinear form `y = aᵀ S_K ⋯ S₁ b`; layers are applied transmit side first.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("layer {layer}: expected {expected} columns, found {found}")]
    Chain { layer: usize, expected: usize, found: usize },
    #[error("last layer has {found} rows but the receive vector has {expected} entries")]
    ReceiveRows { expected: usize, found: usize },
    #[error("no layers given but N = {n} differs from M = {m}")]
    EmptyChain { n: usize, m: usize },
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("ray vectors need at least one entry")]
    EmptyVector,
    #[error("matrix needs positive dimensions, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("path gain must lie in (0, 1], got {0}")]
    PathGain(f64),
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("layer {0} is not a row vector")]
    NotKeyhole(usize),
    #[error("keyhole index {index} out of range for {layers} layers")]
    KeyholeIndex { index: usize, layers: usize },
    #[error("cluster layer needs at least one block")]
    NoBlocks,
    #[error("normalization needs N >= 1")]
    Normalization,
}

/// Per-ray complex responses at one end of the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayVector(Vec<Complex64>);

impl RayVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self, ModelError> {
        if entries.is_empty() {
            return Err(ModelError::EmptyVector);
        }
        Ok(RayVector(entries))
    }

    pub fn from_real(values: &[f64]) -> Result<Self, ModelError> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn entries_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    /// True when every amplitude lies in `[0, 1]`.
    pub fn is_passive(&self) -> bool {
        self.0.iter().all(|z| z.norm() <= 1.0)
    }
}

/// Dense complex matrix stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CouplingMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self, ModelError> {
        if rows == 0 || cols == 0 {
            return Err(ModelError::EmptyMatrix { rows, cols });
        }
        Ok(CouplingMatrix { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] })
    }

    pub fn identity(n: usize) -> Result<Self, ModelError> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        Ok(m)
    }

    pub fn scaled_identity(n: usize, s: Complex64) -> Result<Self, ModelError> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m[(i, i)] = s;
        }
        Ok(m)
    }

    /// Entries filled in column-major order from `f(row, col)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self, ModelError> {
        let mut m = Self::zeros(rows, cols)?;
        for j in 0..cols {
            for i in 0..rows {
                m.data[j * rows + i] = f(i, j);
            }
        }
        Ok(m)
    }

    /// Builds a matrix from row-major nested values.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self, ModelError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(ModelError::Length { left: c, right: bad.len() });
        }
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Column-major entry storage.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn matmul(&self, rhs: &CouplingMatrix) -> Result<CouplingMatrix, ModelError> {
        if self.cols != rhs.rows {
            return Err(ModelError::Length { left: self.cols, right: rhs.rows });
        }
        let mut out = CouplingMatrix::zeros(self.rows, rhs.cols)?;
        for j in 0..rhs.cols {
            for (l, &r) in rhs.column(j).iter().enumerate() {
                let col = self.column(l);
                let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
                for (d, &s) in dst.iter_mut().zip(col) {
                    *d += s * r;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, ModelError> {
        if x.len() != self.cols {
            return Err(ModelError::Length { left: self.cols, right: x.len() });
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for (j, &xj) in x.iter().enumerate() {
            for (o, &s) in out.iter_mut().zip(self.column(j)) {
                *o += s * xj;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> CouplingMatrix {
        CouplingMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Largest magnitude over all 2×2 minors.
    pub fn max_minor(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for k in i + 1..self.rows {
                for j in 0..self.cols {
                    for l in j + 1..self.cols {
                        let minor = self[(i, j)] * self[(k, l)] - self[(i, l)] * self[(k, j)];
                        worst = worst.max(minor.norm());
                    }
                }
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for CouplingMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CouplingMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

/// One local area's channel: receive rays, transmit rays, and layers
/// `S₁ … S_K` in application order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    a: RayVector,
    b: RayVector,
    layers: Vec<CouplingMatrix>,
}

impl ChannelRealization {
    pub fn new(
        a: RayVector,
        b: RayVector,
        layers: Vec<CouplingMatrix>,
    ) -> Result<Self, ModelError> {
        check_chain(&layers, b.len(), a.len())?;
        Ok(ChannelRealization { a, b, layers })
    }

    pub fn a(&self) -> &RayVector {
        &self.a
    }

    pub fn b(&self) -> &RayVector {
        &self.b
    }

    pub fn layers(&self) -> &[CouplingMatrix] {
        &self.layers
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// Replaces the receive vector; the new length must match.
    pub fn with_a(mut self, a: RayVector) -> Result<Self, ModelError> {
        if a.len() != self.a.len() {
            return Err(ModelError::Length { left: self.a.len(), right: a.len() });
        }
        self.a = a;
        Ok(self)
    }

    pub fn map_layers(
        self,
        f: impl FnMut(CouplingMatrix) -> CouplingMatrix,
    ) -> Result<Self, ModelError> {
        let layers = self.layers.into_iter().map(f).collect();
        Self::new(self.a, self.b, layers)
    }

    /// The intermediate vector `c = S b`, evaluated layer by layer.
    pub fn intermediate(&self) -> Vec<Complex64> {
        let mut c = self.b.entries().to_vec();
        for layer in &self.layers {
            c = layer.mul_vec(&c).expect("chain validated on construction");
        }
        c
    }
}

/// Validates the dimension chain from the transmit side (`m` columns into
/// the first layer) to the receive side (`n` rows out of the last).
pub fn check_chain(layers: &[CouplingMatrix], m: usize, n: usize) -> Result<(), ModelError> {
    let mut width = m;
    for (k, layer) in layers.iter().enumerate() {
        if layer.cols() != width {
            return Err(ModelError::Chain { layer: k, expected: width, found: layer.cols() });
        }
        width = layer.rows();
    }
    if layers.is_empty() && n != m {
        return Err(ModelError::EmptyChain { n, m });
    }
    if width != n {
        return Err(ModelError::ReceiveRows { expected: n, found: width });
    }
    Ok(())
}

/// Composite coupling `S = S_K ⋯ S₁`; the identity of size `m` when there
/// are no layers.
pub fn compose_coupling(layers: &[CouplingMatrix], m: usize) -> Result<CouplingMatrix, ModelError> {
    let Some((first, rest)) = layers.split_first() else {
        return CouplingMatrix::identity(m);
    };
    if first.cols() != m {
        return Err(ModelError::Chain { layer: 0, expected: m, found: first.cols() });
    }
    let mut acc = first.clone();
    for (k, layer) in rest.iter().enumerate() {
        if layer.cols() != acc.rows() {
            return Err(ModelError::Chain { layer: k + 1, expected: acc.rows(), found: layer.cols() });
        }
        acc = layer.matmul(&acc)?;
    }
    Ok(acc)
}

/// `y = aᵀ S b`.
pub fn received_signal(r: &ChannelRealization) -> Complex64 {
    r.a.entries().iter().zip(r.intermediate()).map(|(a, c)| a * c).sum()
}

/// Phase-averaged power via the quadratic form `bᴴ Sᴴ Γ_a S b`, with the
/// composite matrix formed explicitly.
pub fn local_mean_power(r: &ChannelRealization) -> f64 {
    let s = compose_coupling(&r.layers, r.m()).expect("chain validated on construction");
    let gamma: Vec<f64> = r.a.entries().iter().map(|z| z.norm_sqr()).collect();
    let b = r.b.entries();
    let m = b.len();
    // G = Sᴴ Γ S is M x M Hermitian; P = bᴴ G b.
    let mut power = Complex64::new(0.0, 0.0);
    for p in 0..m {
        let sp = s.column(p);
        for q in 0..m {
            let sq = s.column(q);
            let g: Complex64 = sp
                .iter()
                .zip(sq)
                .zip(&gamma)
                .map(|((x, y), &w)| x.conj() * y * w)
                .sum();
            power += b[p].conj() * g * b[q];
        }
    }
    power.re.max(0.0)
}

/// `P = Σ |a_n|² |c_n|²`.
pub fn local_mean_power_raysum(a: &RayVector, c: &RayVector) -> Result<f64, ModelError> {
    raysum(a.entries(), c.entries())
}

pub(crate) fn raysum(a: &[Complex64], c: &[Complex64]) -> Result<f64, ModelError> {
    if a.len() != c.len() {
        return Err(ModelError::Length { left: a.len(), right: c.len() });
    }
    Ok(a.iter().zip(c).map(|(a, c)| a.norm_sqr() * c.norm_sqr()).sum())
}

/// Cascade of scalar attenuations applied to every ray:
/// `P = (Σ |a_n|² |b_n|²) · Π |s_k|²`.
pub fn product_model_power(
    a: &RayVector,
    b: &RayVector,
    scalars: &[Complex64],
) -> Result<f64, ModelError> {
    let rays = raysum(a.entries(), b.entries())?;
    Ok(rays * scalars.iter().map(|s| s.norm_sqr()).product::<f64>())
}

/// Power with the intermediate process held fixed; only `a` varies
/// between realizations.
pub fn sum_model_power(a: &RayVector, c_fixed: &RayVector) -> Result<f64, ModelError> {
    local_mean_power_raysum(a, c_fixed)
}

/// Line-of-sight layer: `pl^(1/root)` on the direct ray, `nlos` on the rest,
/// no coupling between the two. With `root = K` the composite direct-ray
/// gain of K such layers is `pl`.
pub fn build_los_layer(
    pl: f64,
    root: u32,
    nlos: &CouplingMatrix,
) -> Result<CouplingMatrix, ModelError> {
    if !(pl > 0.0 && pl <= 1.0) {
        return Err(ModelError::PathGain(pl));
    }
    if !nlos.is_square() {
        return Err(ModelError::NotSquare { rows: nlos.rows(), cols: nlos.cols() });
    }
    let n = nlos.rows() + 1;
    let direct = pl.powf(1.0 / f64::from(root.max(1)));
    CouplingMatrix::from_fn(n, n, |i, j| match (i, j) {
        (0, 0) => Complex64::new(direct, 0.0),
        (0, _) | (_, 0) => Complex64::new(0.0, 0.0),
        _ => nlos[(i - 1, j - 1)],
    })
}

/// Checks that layer `keyhole_index` (0-based) is a single row and that the
/// chain is consistent, returning the layers unchanged.
pub fn build_keyhole_layers(
    layers: Vec<CouplingMatrix>,
    keyhole_index: usize,
) -> Result<Vec<CouplingMatrix>, ModelError> {
    let layer = layers
        .get(keyhole_index)
        .ok_or(ModelError::KeyholeIndex { index: keyhole_index, layers: layers.len() })?;
    if layer.rows() != 1 {
        return Err(ModelError::NotKeyhole(keyhole_index));
    }
    for (k, pair) in layers.windows(2).enumerate() {
        if pair[1].cols() != pair[0].rows() {
            return Err(ModelError::Chain { layer: k + 1, expected: pair[0].rows(), found: pair[1].cols() });
        }
    }
    Ok(layers)
}

/// Block-diagonal layer of independent clusters.
pub fn build_cluster_layer(blocks: &[CouplingMatrix]) -> Result<CouplingMatrix, ModelError> {
    if blocks.is_empty() {
        return Err(ModelError::NoBlocks);
    }
    if let Some(b) = blocks.iter().find(|b| !b.is_square()) {
        return Err(ModelError::NotSquare { rows: b.rows(), cols: b.cols() });
    }
    let n: usize = blocks.iter().map(CouplingMatrix::rows).sum();
    let mut out = CouplingMatrix::zeros(n, n)?;
    let mut offset = 0;
    for block in blocks {
        for j in 0..block.cols() {
            for i in 0..block.rows() {
                out[(offset + i, offset + j)] = block[(i, j)];
            }
        }
        offset += block.rows();
    }
    Ok(out)
}

/// Divides every entry by `√n`.
pub fn normalize_layer(layer: &CouplingMatrix, n: usize) -> Result<CouplingMatrix, ModelError> {
    if n < 1 {
        return Err(ModelError::Normalization);
    }
    Ok(layer.scale(1.0 / (n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{sample_phase, DistSpec, RandomStream};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn ones(rows: usize, cols: usize) -> CouplingMatrix {
        CouplingMatrix::from_fn(rows, cols, |_, _| c(1.0)).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, s: &mut RandomStream) -> CouplingMatrix {
        let sampler = DistSpec::uniform().sampler().unwrap();
        CouplingMatrix::from_fn(rows, cols, |_, _| sampler.sample_complex(s)).unwrap()
    }

    fn random_rays(n: usize, s: &mut RandomStream) -> RayVector {
        let sampler = DistSpec::l_inv(0.0, 1.0).unwrap().sampler().unwrap();
        RayVector::new((0..n).map(|_| sampler.sample_complex(s)).collect()).unwrap()
    }

    fn rel(x: f64, y: f64) -> f64 {
        (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn empty_chain_is_identity() {
        let s = compose_coupling(&[], 3).unwrap();
        assert_eq!(s, CouplingMatrix::identity(3).unwrap());
    }

    #[test]
    fn two_all_ones_layers() {
        let s = compose_coupling(&[ones(2, 2), ones(2, 2)], 2).unwrap();
        assert!(s.as_slice().iter().all(|&z| z == c(2.0)));
    }

    #[test]
    fn composition_matches_naive_triple_loop() {
        let mut st = RandomStream::new(1, 0);
        let layers = vec![random_matrix(4, 3, &mut st), random_matrix(2, 4, &mut st), random_matrix(3, 2, &mut st)];
        let s = compose_coupling(&layers, 3).unwrap();
        let naive = |x: &CouplingMatrix, y: &CouplingMatrix| {
            let mut out = vec![vec![c(0.0); y.cols()]; x.rows()];
            for (i, row) in out.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    for l in 0..x.cols() {
                        *cell += x[(i, l)] * y[(l, j)];
                    }
                }
            }
            CouplingMatrix::from_rows(&out).unwrap()
        };
        let expected = naive(&layers[2], &naive(&layers[1], &layers[0]));
        assert_eq!((s.rows(), s.cols()), (3, 3));
        for (x, y) in s.as_slice().iter().zip(expected.as_slice()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn chain_errors_name_the_layer() {
        let err = compose_coupling(&[ones(2, 3), ones(2, 3)], 3).unwrap_err();
        assert_eq!(err, ModelError::Chain { layer: 1, expected: 2, found: 3 });
        let a = RayVector::from_real(&[1.0, 1.0]).unwrap();
        let b = RayVector::from_real(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            ChannelRealization::new(a.clone(), b.clone(), vec![ones(4, 3)]).unwrap_err(),
            ModelError::ReceiveRows { expected: 2, found: 4 }
        );
        assert_eq!(
            ChannelRealization::new(a, b, vec![]).unwrap_err(),
            ModelError::EmptyChain { n: 2, m: 3 }
        );
    }

    #[test]
    fn scalar_identity_signal() {
        let one = RayVector::from_real(&[1.0]).unwrap();
        let r = ChannelRealization::new(one.clone(), one, vec![ones(1, 1)]).unwrap();
        assert_eq!(received_signal(&r), c(1.0));
        assert!((local_mean_power(&r) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_layer_all_ones_signal() {
        let v = RayVector::from_real(&[1.0, 1.0]).unwrap();
        let r = ChannelRealization::new(v.clone(), v, vec![ones(2, 2), ones(2, 2)]).unwrap();
        assert_eq!(received_signal(&r), c(8.0));
    }

    #[test]
    fn signal_matches_path_enumeration() {
        let mut st = RandomStream::new(2, 0);
        let (n, m) = (3, 2);
        let layers = vec![random_matrix(4, m, &mut st), random_matrix(2, 4, &mut st), random_matrix(n, 2, &mut st)];
        let a = random_rays(n, &mut st);
        let b = random_rays(m, &mut st);
        let r = ChannelRealization::new(a.clone(), b.clone(), layers.clone()).unwrap();
        // Sum over every ray path m -> i1 -> i2 -> n.
        let mut y = c(0.0);
        for (mi, bm) in b.entries().iter().enumerate() {
            for i1 in 0..4 {
                for i2 in 0..2 {
                    for (ni, an) in a.entries().iter().enumerate() {
                        y += an * layers[2][(ni, i2)] * layers[1][(i2, i1)] * layers[0][(i1, mi)] * bm;
                    }
                }
            }
        }
        assert!((received_signal(&r) - y).norm() < 1e-13);
    }

    #[test]
    fn mean_power_hand_case() {
        let v = RayVector::from_real(&[1.0, 1.0]).unwrap();
        let r = ChannelRealization::new(v.clone(), v, vec![ones(2, 2)]).unwrap();
        assert_eq!(r.intermediate(), vec![c(2.0), c(2.0)]);
        assert!((local_mean_power(&r) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn mean_power_is_the_phase_average() {
        let mut st = RandomStream::new(3, 0);
        let layers = vec![random_matrix(3, 3, &mut st), random_matrix(3, 3, &mut st)];
        let r = ChannelRealization::new(random_rays(3, &mut st), random_rays(3, &mut st), layers).unwrap();
        let p = local_mean_power(&r);
        let c_vec = r.intermediate();
        let amps: Vec<f64> = r.a().entries().iter().map(|z| z.norm()).collect();
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let y: Complex64 = amps
                .iter()
                .zip(&c_vec)
                .map(|(&amp, c)| Complex64::from_polar(amp, sample_phase(&mut st)) * c)
                .sum();
            acc += y.norm_sqr();
        }
        assert!(rel(acc / draws as f64, p) < 0.01);
    }

    #[test]
    fn mean_power_ignores_receive_phases() {
        let mut st = RandomStream::new(4, 0);
        let layers = vec![random_matrix(4, 4, &mut st)];
        let r = ChannelRealization::new(random_rays(4, &mut st), random_rays(4, &mut st), layers).unwrap();
        let p = local_mean_power(&r);
        let rotated: Vec<Complex64> = r
            .a()
            .entries()
            .iter()
            .map(|z| Complex64::from_polar(z.norm(), sample_phase(&mut st)))
            .collect();
        let r2 = r.with_a(RayVector::new(rotated).unwrap()).unwrap();
        assert!(rel(local_mean_power(&r2), p) < 1e-12);
    }

    #[test]
    fn raysum_cases() {
        let one = RayVector::from_real(&[1.0]).unwrap();
        assert_eq!(local_mean_power_raysum(&one, &one).unwrap(), 1.0);
        let a = RayVector::from_real(&[1.0, 0.0]).unwrap();
        let cc = RayVector::from_real(&[5.0, 7.0]).unwrap();
        assert_eq!(local_mean_power_raysum(&a, &cc).unwrap(), 25.0);
        assert!(local_mean_power_raysum(&a, &one).is_err());
        assert_eq!(sum_model_power(&a, &cc).unwrap(), 25.0);
        let x = RayVector::from_real(&[0.3]).unwrap();
        let y = RayVector::from_real(&[0.6]).unwrap();
        assert!((sum_model_power(&x, &y).unwrap() - 0.09 * 0.36).abs() < 1e-16);
    }

    #[test]
    fn quadratic_form_equals_raysum() {
        let mut st = RandomStream::new(5, 0);
        for _ in 0..1000 {
            let n = 1 + (st.uniform() * 6.0) as usize;
            let k = 1 + (st.uniform() * 4.0) as usize;
            let layers: Vec<_> = (0..k).map(|_| random_matrix(n, n, &mut st)).collect();
            let r = ChannelRealization::new(random_rays(n, &mut st), random_rays(n, &mut st), layers).unwrap();
            let p6 = local_mean_power(&r);
            let p7 = local_mean_power_raysum(r.a(), &RayVector::new(r.intermediate()).unwrap()).unwrap();
            assert!(rel(p7, p6) < 1e-12, "{p6} {p7}");
        }
    }

    #[test]
    fn product_model_reduction() {
        let one = RayVector::from_real(&[1.0]).unwrap();
        assert_eq!(product_model_power(&one, &one, &[c(1.0)]).unwrap(), 1.0);
        let mut st = RandomStream::new(6, 0);
        let (a, b) = (random_rays(5, &mut st), random_rays(5, &mut st));
        let scalars: Vec<Complex64> = (0..4).map(|_| random_matrix(1, 1, &mut st)[(0, 0)]).collect();
        let layers = scalars.iter().map(|&s| CouplingMatrix::scaled_identity(5, s).unwrap()).collect();
        let r = ChannelRealization::new(a.clone(), b.clone(), layers).unwrap();
        let direct = product_model_power(&a, &b, &scalars).unwrap();
        assert!(rel(local_mean_power(&r), direct) < 1e-12);
        let mut zeroed = scalars.clone();
        zeroed[2] = c(0.0);
        assert_eq!(product_model_power(&a, &b, &zeroed).unwrap(), 0.0);
    }

    #[test]
    fn los_layers() {
        let l = build_los_layer(0.25, 1, &ones(1, 1)).unwrap();
        assert_eq!(l, CouplingMatrix::from_rows(&[vec![c(0.25), c(0.0)], vec![c(0.0), c(1.0)]]).unwrap());

        let mut st = RandomStream::new(7, 0);
        let layers: Vec<_> = (0..4)
            .map(|_| build_los_layer(1e-4, 4, &random_matrix(3, 3, &mut st)).unwrap())
            .collect();
        assert!((layers[0][(0, 0)].re - 0.1).abs() < 1e-15);
        let s = compose_coupling(&layers, 4).unwrap();
        assert!(rel(s[(0, 0)].re, 1e-4) < 1e-12);
        for i in 1..4 {
            assert_eq!(s[(0, i)], c(0.0));
            assert_eq!(s[(i, 0)], c(0.0));
        }
        assert_eq!(build_los_layer(1.5, 1, &ones(1, 1)), Err(ModelError::PathGain(1.5)));
        assert_eq!(build_los_layer(0.0, 1, &ones(1, 1)), Err(ModelError::PathGain(0.0)));
        assert!(matches!(build_los_layer(0.5, 1, &ones(1, 2)), Err(ModelError::NotSquare { .. })));
    }

    #[test]
    fn keyhole_all_ones() {
        let layers = build_keyhole_layers(vec![ones(2, 2), ones(1, 2), ones(2, 1)], 1).unwrap();
        let s = compose_coupling(&layers, 2).unwrap();
        assert!(s.as_slice().iter().all(|&z| z == c(2.0)));
        assert_eq!(build_keyhole_layers(vec![ones(2, 2)], 0), Err(ModelError::NotKeyhole(0)));
        assert!(matches!(build_keyhole_layers(vec![ones(1, 2)], 3), Err(ModelError::KeyholeIndex { .. })));
        assert!(matches!(
            build_keyhole_layers(vec![ones(1, 2), ones(2, 2)], 0),
            Err(ModelError::Chain { layer: 1, .. })
        ));
    }

    #[test]
    fn keyhole_power_factorizes() {
        let mut st = RandomStream::new(8, 0);
        let n = 4;
        let layers = build_keyhole_layers(
            vec![
                random_matrix(n, n, &mut st),
                random_matrix(1, n, &mut st),
                random_matrix(n, 1, &mut st),
                random_matrix(n, n, &mut st),
            ],
            1,
        )
        .unwrap();
        let s = compose_coupling(&layers, n).unwrap();
        assert!(s.max_minor() < 1e-10);
        let (a, b) = (random_rays(n, &mut st), random_rays(n, &mut st));
        // S = u vᵀ with u = S₄ S₃ and vᵀ = S₂ S₁.
        let u = layers[3].matmul(&layers[2]).unwrap();
        let v = layers[1].matmul(&layers[0]).unwrap();
        let vb: Complex64 = (0..n).map(|j| v[(0, j)] * b.entries()[j]).sum();
        let expected: f64 = (0..n).map(|i| a.entries()[i].norm_sqr() * u[(i, 0)].norm_sqr()).sum::<f64>()
            * vb.norm_sqr();
        let r = ChannelRealization::new(a, b, layers).unwrap();
        assert!(rel(local_mean_power(&r), expected) < 1e-12);
    }

    #[test]
    fn cluster_layers_decouple() {
        let d = build_cluster_layer(&[
            CouplingMatrix::scaled_identity(1, c(2.0)).unwrap(),
            CouplingMatrix::scaled_identity(1, c(3.0)).unwrap(),
        ])
        .unwrap();
        assert_eq!(d, CouplingMatrix::from_rows(&[vec![c(2.0), c(0.0)], vec![c(0.0), c(3.0)]]).unwrap());
        assert_eq!(build_cluster_layer(&[]), Err(ModelError::NoBlocks));

        let mut st = RandomStream::new(9, 0);
        let sizes = [2usize, 3, 1];
        let n: usize = sizes.iter().sum();
        let blocks: Vec<Vec<CouplingMatrix>> =
            (0..3).map(|_| sizes.iter().map(|&s| random_matrix(s, s, &mut st)).collect()).collect();
        let layers: Vec<_> = blocks.iter().map(|bl| build_cluster_layer(bl).unwrap()).collect();
        let (a, b) = (random_rays(n, &mut st), random_rays(n, &mut st));
        let total = local_mean_power(&ChannelRealization::new(a.clone(), b.clone(), layers).unwrap());
        let mut offset = 0;
        let mut parts = 0.0;
        for (l, &size) in sizes.iter().enumerate() {
            let sub = |v: &RayVector| RayVector::new(v.entries()[offset..offset + size].to_vec()).unwrap();
            let cluster_layers = blocks.iter().map(|bl| bl[l].clone()).collect();
            parts += local_mean_power(&ChannelRealization::new(sub(&a), sub(&b), cluster_layers).unwrap());
            offset += size;
        }
        assert!(rel(parts, total) < 1e-12);
    }

    #[test]
    fn scalar_clusters_reduce_to_products() {
        let mut st = RandomStream::new(10, 0);
        let sizes = [3usize, 2];
        let scalars: Vec<Vec<Complex64>> =
            (0..4).map(|_| sizes.iter().map(|_| random_matrix(1, 1, &mut st)[(0, 0)]).collect()).collect();
        let layers: Vec<_> = scalars
            .iter()
            .map(|row| {
                let blocks: Vec<_> = sizes
                    .iter()
                    .zip(row)
                    .map(|(&s, &v)| CouplingMatrix::scaled_identity(s, v).unwrap())
                    .collect();
                build_cluster_layer(&blocks).unwrap()
            })
            .collect();
        let (a, b) = (random_rays(5, &mut st), random_rays(5, &mut st));
        let total = local_mean_power(&ChannelRealization::new(a.clone(), b.clone(), layers).unwrap());
        let mut expected = 0.0;
        let mut offset = 0;
        for (l, &size) in sizes.iter().enumerate() {
            let sub = |v: &RayVector| RayVector::new(v.entries()[offset..offset + size].to_vec()).unwrap();
            let per: Vec<Complex64> = scalars.iter().map(|row| row[l]).collect();
            expected += product_model_power(&sub(&a), &sub(&b), &per).unwrap();
            offset += size;
        }
        assert!(rel(total, expected) < 1e-12);
    }

    #[test]
    fn normalization_scales_power() {
        let l = ones(3, 3);
        assert_eq!(normalize_layer(&l, 1).unwrap(), l);
        assert_eq!(normalize_layer(&l, 0), Err(ModelError::Normalization));
        let mut st = RandomStream::new(11, 0);
        let layers: Vec<_> = (0..3).map(|_| random_matrix(4, 4, &mut st)).collect();
        let r = ChannelRealization::new(random_rays(4, &mut st), random_rays(4, &mut st), layers).unwrap();
        let p = local_mean_power(&r);
        let rn = r.map_layers(|l| normalize_layer(&l, 4).unwrap()).unwrap();
        assert!(rel(local_mean_power(&rn), p / 64.0) < 1e-12);
    }
}
