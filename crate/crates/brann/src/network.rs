//! Feedforward network representation: transfer functions, forward
//! evaluation, and analytic derivatives (gradient and per-sample Jacobian).
//!
//! Parameters are canonically ordered layer by layer, each layer's weight
//! matrix row-major followed by its bias vector. Checkpoints, traces and the
//! Levenberg-Marquardt machinery all rely on that ordering.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::{self, Jobs};

/// The ten selectable elementwise transfer functions.
///
/// `hardlim` and `compet` are not differentiable; their derivative is defined
/// as zero everywhere, which makes gradient-based training a no-op through
/// them. They stay selectable so transfer-function grids can include them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransferKind {
    Tansig,
    Logsig,
    Purelin,
    Poslin,
    Satlin,
    Hardlim,
    Tribas,
    Radbas,
    Elliotsig,
    Compet,
}

impl TransferKind {
    pub const ALL: [TransferKind; 10] = [
        TransferKind::Tansig,
        TransferKind::Logsig,
        TransferKind::Purelin,
        TransferKind::Poslin,
        TransferKind::Satlin,
        TransferKind::Hardlim,
        TransferKind::Tribas,
        TransferKind::Radbas,
        TransferKind::Elliotsig,
        TransferKind::Compet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransferKind::Tansig => "tansig",
            TransferKind::Logsig => "logsig",
            TransferKind::Purelin => "purelin",
            TransferKind::Poslin => "poslin",
            TransferKind::Satlin => "satlin",
            TransferKind::Hardlim => "hardlim",
            TransferKind::Tribas => "tribas",
            TransferKind::Radbas => "radbas",
            TransferKind::Elliotsig => "elliotsig",
            TransferKind::Compet => "compet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown transfer function `{s}`")))
    }

    /// False for `hardlim` and `compet`, whose a.e. derivative is zero.
    pub fn is_differentiable(self) -> bool {
        !matches!(self, TransferKind::Hardlim | TransferKind::Compet)
    }

    /// Scalar transfer value. `compet` is not a scalar function and must go
    /// through [`transfer_apply`]; calling it here panics.
    fn apply_scalar(self, z: f64) -> f64 {
        match self {
            TransferKind::Tansig => 2.0 / (1.0 + (-2.0 * z).exp()) - 1.0,
            TransferKind::Logsig => 1.0 / (1.0 + (-z).exp()),
            TransferKind::Purelin => z,
            TransferKind::Poslin => z.max(0.0),
            TransferKind::Satlin => z.clamp(0.0, 1.0),
            TransferKind::Hardlim => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TransferKind::Tribas => (1.0 - z.abs()).max(0.0),
            TransferKind::Radbas => (-z * z).exp(),
            TransferKind::Elliotsig => z / (1.0 + z.abs()),
            TransferKind::Compet => unreachable!("compet is vector-valued"),
        }
    }

    /// Scalar a.e. derivative; right-hand derivative at breakpoints.
    fn derivative_scalar(self, z: f64) -> f64 {
        match self {
            TransferKind::Tansig => {
                let t = self.apply_scalar(z);
                1.0 - t * t
            }
            TransferKind::Logsig => {
                let s = self.apply_scalar(z);
                s * (1.0 - s)
            }
            TransferKind::Purelin => 1.0,
            TransferKind::Poslin => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TransferKind::Satlin => {
                if (0.0..1.0).contains(&z) {
                    1.0
                } else {
                    0.0
                }
            }
            TransferKind::Hardlim => 0.0,
            TransferKind::Tribas => {
                if !(-1.0..1.0).contains(&z) {
                    0.0
                } else if z >= 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            TransferKind::Radbas => -2.0 * z * (-z * z).exp(),
            TransferKind::Elliotsig => {
                let d = 1.0 + z.abs();
                1.0 / (d * d)
            }
            TransferKind::Compet => 0.0,
        }
    }

    /// Apply in place to one sample's pre-activation vector.
    fn apply_slice(self, z: &mut [f64]) {
        if self == TransferKind::Compet {
            compet_one_hot(z);
        } else {
            for v in z.iter_mut() {
                *v = self.apply_scalar(*v);
            }
        }
    }
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One-hot of the argmax, ties broken by lowest index.
fn compet_one_hot(z: &mut [f64]) {
    let mut best = 0usize;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    for v in z.iter_mut() {
        *v = 0.0;
    }
    z[best] = 1.0;
}

fn check_finite(z: &[f64]) -> Result<()> {
    if let Some(pos) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite value {} at index {pos}",
            z[pos]
        )));
    }
    Ok(())
}

/// Elementwise transfer application; `compet` returns the one-hot argmax.
pub fn transfer_apply(kind: TransferKind, z: &[f64]) -> Result<Vec<f64>> {
    check_finite(z)?;
    let mut out = z.to_vec();
    kind.apply_slice(&mut out);
    Ok(out)
}

/// Elementwise a.e. derivative (right-hand derivative at breakpoints;
/// identically zero for `hardlim` and `compet`).
pub fn transfer_derivative(kind: TransferKind, z: &[f64]) -> Result<Vec<f64>> {
    check_finite(z)?;
    Ok(z.iter().map(|&v| kind.derivative_scalar(v)).collect())
}

/// Layer sizes plus the transfer function of every non-input layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkLayout {
    layer_sizes: Vec<usize>,
    transfers: Vec<TransferKind>,
}

impl NetworkLayout {
    pub fn new(layer_sizes: Vec<usize>, transfers: Vec<TransferKind>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid(
                "a layout needs at least an input and an output layer",
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("every layer size must be >= 1"));
        }
        if transfers.len() != layer_sizes.len() - 1 {
            return Err(Error::invalid(format!(
                "{} transfers supplied for {} non-input layers",
                transfers.len(),
                layer_sizes.len() - 1
            )));
        }
        Ok(NetworkLayout {
            layer_sizes,
            transfers,
        })
    }

    /// Single hidden-transfer shorthand: all hidden layers share `hidden`,
    /// the output layer is `purelin` (the usual regression head).
    pub fn regression(
        input_dim: usize,
        hidden_sizes: &[usize],
        hidden: TransferKind,
        output_dim: usize,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden_sizes.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden_sizes);
        sizes.push(output_dim);
        let mut transfers = vec![hidden; hidden_sizes.len()];
        transfers.push(TransferKind::Purelin);
        NetworkLayout::new(sizes, transfers)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn transfers(&self) -> &[TransferKind] {
        &self.transfers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total parameter count k = sum over layers of (n_in + 1) * n_out.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }
}

/// A fully-connected feedforward network. Immutable after construction; all
/// evaluation methods take `&self` and are safe to call concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layout: NetworkLayout,
    /// Per layer: rows = layer outputs, cols = layer inputs.
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

impl Network {
    pub fn new(
        layout: NetworkLayout,
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if weights.len() != layout.depth() || biases.len() != layout.depth() {
            return Err(Error::shape(format!(
                "expected {} weight layers, got {} weights / {} biases",
                layout.depth(),
                weights.len(),
                biases.len()
            )));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let (n_in, n_out) = (layout.layer_sizes[l], layout.layer_sizes[l + 1]);
            if w.nrows() != n_out || w.ncols() != n_in {
                return Err(Error::shape(format!(
                    "layer {l}: weight matrix is {}x{}, layout wants {}x{}",
                    w.nrows(),
                    w.ncols(),
                    n_out,
                    n_in
                )));
            }
            if b.len() != n_out {
                return Err(Error::shape(format!(
                    "layer {l}: bias length {} != {}",
                    b.len(),
                    n_out
                )));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {l}: non-finite parameter")));
            }
        }
        Ok(Network {
            layout,
            weights,
            biases,
        })
    }

    pub fn layout(&self) -> &NetworkLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.param_count()
    }

    /// Flatten into the canonical parameter vector: per layer, W row-major
    /// then b.
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    out.push(w[(r, c)]);
                }
            }
            out.extend(b.iter().copied());
        }
        DVector::from_vec(out)
    }

    /// Rebuild a network from a canonical parameter vector.
    pub fn from_params(layout: NetworkLayout, params: &DVector<f64>) -> Result<Self> {
        if params.len() != layout.param_count() {
            return Err(Error::shape(format!(
                "parameter vector length {} != layout parameter count {}",
                params.len(),
                layout.param_count()
            )));
        }
        let mut weights = Vec::with_capacity(layout.depth());
        let mut biases = Vec::with_capacity(layout.depth());
        let mut idx = 0usize;
        for l in 0..layout.depth() {
            let (n_in, n_out) = (layout.layer_sizes[l], layout.layer_sizes[l + 1]);
            let mut w = DMatrix::zeros(n_out, n_in);
            for r in 0..n_out {
                for c in 0..n_in {
                    w[(r, c)] = params[idx];
                    idx += 1;
                }
            }
            let b = DVector::from_iterator(n_out, params.iter().skip(idx).take(n_out).copied());
            idx += n_out;
            weights.push(w);
            biases.push(b);
        }
        Network::new(layout, weights, biases)
    }

    /// Replace parameters, keeping the layout.
    pub fn with_params(&self, params: &DVector<f64>) -> Result<Self> {
        Network::from_params(self.layout.clone(), params)
    }

    /// Sum of squares over all k parameters (weights and biases).
    pub fn ssw(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .map(|v| v * v)
            .sum()
    }

    /// Batch forward pass: row i of the result is the network output for
    /// input row i.
    pub fn forward(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.layout.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                inputs.ncols(),
                self.layout.input_dim()
            )));
        }
        let mut act = inputs.clone();
        for l in 0..self.layout.depth() {
            act = self.layer_forward(l, &act);
        }
        Ok(act)
    }

    fn layer_forward(&self, layer: usize, act: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = act * self.weights[layer].transpose();
        let b = &self.biases[layer];
        for mut row in z.row_iter_mut() {
            row += b.transpose();
        }
        apply_transfer_matrix(self.layout.transfers[layer], &mut z);
        z
    }

    /// Forward pass keeping pre-activations and activations for backprop.
    fn forward_cached(&self, inputs: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let depth = self.layout.depth();
        let mut activations = Vec::with_capacity(depth + 1);
        let mut pre = Vec::with_capacity(depth);
        activations.push(inputs.clone());
        for l in 0..depth {
            let mut z = activations.last().unwrap() * self.weights[l].transpose();
            let b = &self.biases[l];
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            pre.push(z.clone());
            apply_transfer_matrix(self.layout.transfers[l], &mut z);
            activations.push(z);
        }
        (activations, pre)
    }

    /// Analytic gradient of `beta * SSE + alpha * SSW` via backpropagation,
    /// in canonical parameter order.
    pub fn gradient(
        &self,
        inputs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        beta: f64,
        alpha: f64,
    ) -> Result<DVector<f64>> {
        if inputs.ncols() != self.layout.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                inputs.ncols(),
                self.layout.input_dim()
            )));
        }
        if targets.ncols() != self.layout.output_dim() || targets.nrows() != inputs.nrows() {
            return Err(Error::shape(format!(
                "targets are {}x{}, expected {}x{}",
                targets.nrows(),
                targets.ncols(),
                inputs.nrows(),
                self.layout.output_dim()
            )));
        }
        if beta < 0.0 || alpha < 0.0 {
            return Err(Error::invalid("alpha and beta must be >= 0"));
        }
        let depth = self.layout.depth();
        let (activations, pre) = self.forward_cached(inputs);

        // dF/dP for F = beta * sum((P - T)^2).
        let mut delta = activations[depth].clone() - targets;
        delta *= 2.0 * beta;
        hadamard_derivative(self.layout.transfers[depth - 1], &pre[depth - 1], &mut delta);

        let mut grad_w: Vec<DMatrix<f64>> = Vec::with_capacity(depth);
        let mut grad_b: Vec<DVector<f64>> = Vec::with_capacity(depth);
        for l in (0..depth).rev() {
            grad_w.push(delta.transpose() * &activations[l]);
            grad_b.push(column_sums(&delta));
            if l > 0 {
                let mut next = &delta * &self.weights[l];
                hadamard_derivative(self.layout.transfers[l - 1], &pre[l - 1], &mut next);
                delta = next;
            }
        }
        grad_w.reverse();
        grad_b.reverse();

        let mut grad = Vec::with_capacity(self.param_count());
        for (gw, gb) in grad_w.iter().zip(&grad_b) {
            for r in 0..gw.nrows() {
                for c in 0..gw.ncols() {
                    grad.push(gw[(r, c)]);
                }
            }
            grad.extend(gb.iter().copied());
        }
        let mut grad = DVector::from_vec(grad);
        if alpha > 0.0 {
            grad += 2.0 * alpha * self.flatten();
        }
        Ok(grad)
    }

    /// Per-sample Jacobian of the outputs w.r.t. all k parameters.
    ///
    /// Row `i * m + j` holds d output_j(x_i) / d w. Samples are independent,
    /// so rows are computed in parallel when the `parallel` feature is on.
    pub fn jacobian(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.jacobian_with(Jobs::default(), inputs)
    }

    /// [`Network::jacobian`] with an explicit parallelism setting.
    pub fn jacobian_with(&self, jobs: Jobs, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.layout.input_dim() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                inputs.ncols(),
                self.layout.input_dim()
            )));
        }
        let n = inputs.nrows();
        let m = self.layout.output_dim();
        let k = self.param_count();
        let rows: Vec<usize> = (0..n).collect();
        let blocks = exec::map(jobs, &rows, |&i| {
            let x = inputs.row(i).clone_owned();
            self.sample_jacobian(&x)
        });
        let mut jac = DMatrix::zeros(n * m, k);
        for (i, block) in blocks.into_iter().enumerate() {
            jac.rows_mut(i * m, m).copy_from(&block);
        }
        Ok(jac)
    }

    /// Jacobian block (m x k) for one sample.
    fn sample_jacobian(&self, x: &nalgebra::RowDVector<f64>) -> DMatrix<f64> {
        let depth = self.layout.depth();
        let m = self.layout.output_dim();
        let k = self.param_count();

        // Forward, keeping per-layer activation rows and derivative rows.
        let mut acts: Vec<nalgebra::RowDVector<f64>> = Vec::with_capacity(depth + 1);
        let mut dphi: Vec<Vec<f64>> = Vec::with_capacity(depth);
        acts.push(x.clone());
        for l in 0..depth {
            let mut z = acts[l].clone() * self.weights[l].transpose();
            z += self.biases[l].transpose();
            let kind = self.layout.transfers[l];
            dphi.push(z.iter().map(|&v| kind.derivative_scalar(v)).collect());
            let mut a = z;
            {
                let slice: &mut [f64] = a.as_mut_slice();
                kind.apply_slice(slice);
            }
            acts.push(a);
        }

        // Layer offsets into the canonical parameter vector.
        let mut offsets = Vec::with_capacity(depth);
        let mut off = 0usize;
        for l in 0..depth {
            offsets.push(off);
            off += (self.layout.layer_sizes[l] + 1) * self.layout.layer_sizes[l + 1];
        }

        let mut block = DMatrix::zeros(m, k);
        for j in 0..m {
            // Seed: d output_j / d z_L.
            let mut delta: Vec<f64> = vec![0.0; m];
            delta[j] = dphi[depth - 1][j];
            for l in (0..depth).rev() {
                let n_in = self.layout.layer_sizes[l];
                let n_out = self.layout.layer_sizes[l + 1];
                let base = offsets[l];
                for r in 0..n_out {
                    let d = delta[r];
                    if d != 0.0 {
                        for c in 0..n_in {
                            block[(j, base + r * n_in + c)] = d * acts[l][c];
                        }
                    }
                    block[(j, base + n_out * n_in + r)] = d;
                }
                if l > 0 {
                    let w = &self.weights[l];
                    let mut prev = vec![0.0; n_in];
                    for (c, p) in prev.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for r in 0..n_out {
                            acc += delta[r] * w[(r, c)];
                        }
                        *p = acc * dphi[l - 1][c];
                    }
                    delta = prev;
                }
            }
        }
        block
    }

    /// Write the checkpoint text format: a key-value header followed by the
    /// canonical parameter vector, one shortest-round-trip decimal per line.
    pub fn save_checkpoint(&self, seed: u64, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("brann-checkpoint v1\n");
        out.push_str(&format!(
            "layout = {}\n",
            self.layout
                .layer_sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        ));
        out.push_str(&format!(
            "transfers = {}\n",
            self.layout
                .transfers
                .iter()
                .map(|t| t.name())
                .collect::<Vec<_>>()
                .join(" ")
        ));
        out.push_str(&format!("seed = {seed}\n"));
        out.push_str(&format!("params = {}\n", self.param_count()));
        let flat = self.flatten();
        for v in flat.iter() {
            out.push_str(&format!("{v}\n"));
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Read a checkpoint written by [`Network::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<(Self, u64)> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let magic = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::data("empty checkpoint file"))?;
        if magic.trim() != "brann-checkpoint v1" {
            return Err(Error::data(format!("unrecognized checkpoint header `{magic}`")));
        }
        let mut layout_sizes: Option<Vec<usize>> = None;
        let mut transfers: Option<Vec<TransferKind>> = None;
        let mut seed: Option<u64> = None;
        let mut count: Option<usize> = None;
        for _ in 0..4 {
            let line = lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::data("truncated checkpoint header"))?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::data(format!("bad header line `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "layout" => {
                    layout_sizes = Some(
                        value
                            .split_whitespace()
                            .map(|t| {
                                t.parse::<usize>()
                                    .map_err(|_| Error::data(format!("bad layer size `{t}`")))
                            })
                            .collect::<Result<_>>()?,
                    )
                }
                "transfers" => {
                    transfers = Some(
                        value
                            .split_whitespace()
                            .map(TransferKind::parse)
                            .collect::<Result<_>>()?,
                    )
                }
                "seed" => {
                    seed = Some(
                        value
                            .parse()
                            .map_err(|_| Error::data(format!("bad seed `{value}`")))?,
                    )
                }
                "params" => {
                    count = Some(
                        value
                            .parse()
                            .map_err(|_| Error::data(format!("bad param count `{value}`")))?,
                    )
                }
                other => return Err(Error::data(format!("unknown header key `{other}`"))),
            }
        }
        let layout = NetworkLayout::new(
            layout_sizes.ok_or_else(|| Error::data("checkpoint missing layout"))?,
            transfers.ok_or_else(|| Error::data("checkpoint missing transfers"))?,
        )?;
        let count = count.ok_or_else(|| Error::data("checkpoint missing param count"))?;
        if count != layout.param_count() {
            return Err(Error::data(format!(
                "checkpoint declares {count} params but the layout has {}",
                layout.param_count()
            )));
        }
        let mut values = Vec::with_capacity(count);
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::data(format!("bad parameter value `{line}`")))?;
            values.push(v);
        }
        if values.len() != count {
            return Err(Error::data(format!(
                "checkpoint has {} parameter lines, expected {count}",
                values.len()
            )));
        }
        let net = Network::from_params(layout, &DVector::from_vec(values))?;
        Ok((net, seed.unwrap_or(0)))
    }
}

/// Apply a transfer function to a whole pre-activation matrix, row-wise for
/// `compet`, elementwise otherwise.
fn apply_transfer_matrix(kind: TransferKind, z: &mut DMatrix<f64>) {
    if kind == TransferKind::Compet {
        for mut row in z.row_iter_mut() {
            let mut tmp: Vec<f64> = row.iter().copied().collect();
            compet_one_hot(&mut tmp);
            for (dst, src) in row.iter_mut().zip(&tmp) {
                *dst = *src;
            }
        }
    } else {
        for v in z.iter_mut() {
            *v = kind.apply_scalar(*v);
        }
    }
}

/// In place: delta <- delta .* f'(pre)
fn hadamard_derivative(kind: TransferKind, pre: &DMatrix<f64>, delta: &mut DMatrix<f64>) {
    for (d, &z) in delta.iter_mut().zip(pre.iter()) {
        *d *= kind.derivative_scalar(z);
    }
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(m.ncols());
    for row in m.row_iter() {
        out += row.transpose();
    }
    out
}

/// Deterministic seeded initialization: uniform [-0.5, 0.5] base draws with
/// Nguyen-Widrow scaling on hidden layers. The output layer keeps its raw
/// uniform draws.
pub fn init_weights(layout: &NetworkLayout, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = layout.depth();
    let mut weights = Vec::with_capacity(depth);
    let mut biases = Vec::with_capacity(depth);
    for l in 0..depth {
        let n_in = layout.layer_sizes[l];
        let n_out = layout.layer_sizes[l + 1];
        let mut w = DMatrix::zeros(n_out, n_in);
        for r in 0..n_out {
            for c in 0..n_in {
                w[(r, c)] = rng.random_range(-0.5..0.5);
            }
        }
        let mut b = DVector::zeros(n_out);
        for r in 0..n_out {
            b[r] = rng.random_range(-0.5..0.5);
        }
        let is_hidden = l < depth - 1;
        if is_hidden {
            let scale = 0.7 * (n_out as f64).powf(1.0 / n_in as f64);
            for r in 0..n_out {
                let norm = w.row(r).norm();
                if norm < 1e-12 {
                    w[(r, 0)] = scale;
                } else {
                    let factor = scale / norm;
                    for c in 0..n_in {
                        w[(r, c)] *= factor;
                    }
                }
                // Base draw in [-0.5, 0.5] stretched to [-scale, scale].
                b[r] *= 2.0 * scale;
            }
        }
        weights.push(w);
        biases.push(b);
    }
    Network::new(layout.clone(), weights, biases).expect("seeded init always matches its layout")
}
