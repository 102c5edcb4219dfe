//! Matrix-product-state decoders mapping (basis bits..., branch value) to an
//! output vector.
//!
//! Sites hold two core matrices (one per physical index); the feature map
//! xi(x) = (x, 1-x) selects their mixture. Contraction runs left to right:
//! boundary row vector, repeated bond-matrix products, output-leg extraction
//! at the center site. The branch value occupies the LAST site; the output
//! leg sits on the center core, site ceil(n_sites/2) (1-based).

use crate::autodiff::{ParamId, ParamSet, Tape, TapeBinding, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::rng;

/// xi(x) = (x, 1 - x) for x in [0,1], with a 1e-9 clamping tolerance.
pub fn feature_map(x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(Error::NonFinite { op: "feature_map" });
    }
    let clamped = x.clamp(0.0, 1.0);
    if (x - clamped).abs() > 1e-9 {
        return Err(Error::invalid("feature_map", format!("input {x} outside [0,1]")));
    }
    Ok((clamped, 1.0 - clamped))
}

/// One contraction input: a plain number (bits, probabilities) or a tape
/// node carrying gradient (the classical branch value).
#[derive(Debug, Clone, Copy)]
pub enum MpsInput {
    Value(f64),
    Node(TensorId),
}

#[derive(Debug, Clone)]
pub struct MpsDecoder {
    n_sites: usize,
    bond: usize,
    d_out: usize,
    center: usize,
    /// Per site, per physical index.
    cores: Vec<[ParamId; 2]>,
}

/// Center site index, 0-based: ceil(n_sites/2) in 1-based terms.
pub fn center_site(n_sites: usize) -> usize {
    (n_sites - 1) / 2
}

fn site_dims(n_sites: usize, bond: usize, site: usize) -> (usize, usize) {
    let r_l = if site == 0 { 1 } else { bond };
    let r_r = if site == n_sites - 1 { 1 } else { bond };
    (r_l, r_r)
}

/// Trainable scalar count: two matrices [r_l, r_r] per site, with the center
/// matrices widened by d_out.
pub fn decoder_param_count(n_sites: usize, bond: usize, d_out: usize) -> usize {
    let c = center_site(n_sites);
    (0..n_sites)
        .map(|j| {
            let (r_l, r_r) = site_dims(n_sites, bond, j);
            2 * r_l * r_r * if j == c { d_out } else { 1 }
        })
        .sum()
}

impl MpsDecoder {
    /// Bond cores initialize near identity plus uniform noise of scale 1e-2;
    /// the output-leg core is pure zero-mean noise so initial outputs are
    /// small but gradients reach every core.
    pub fn new(
        pset: &mut ParamSet,
        prefix: &str,
        n_sites: usize,
        bond: usize,
        d_out: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::with_scale(pset, prefix, n_sites, bond, d_out, seed, 1e-2)
    }

    /// Like `new` but with an explicit noise scale. The center (output-leg)
    /// core is uniform in +-scale, so initial decoder outputs are O(scale);
    /// pick it to match the magnitude the generated weights should start at.
    pub fn with_scale(
        pset: &mut ParamSet,
        prefix: &str,
        n_sites: usize,
        bond: usize,
        d_out: usize,
        seed: u64,
        scale: f64,
    ) -> Result<Self> {
        if n_sites == 0 || bond == 0 || d_out == 0 {
            return Err(Error::invalid(
                "mps_new",
                format!("n_sites {n_sites}, bond {bond}, d_out {d_out} must be positive"),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid("mps_new", format!("init scale {scale} must be positive")));
        }
        let center = center_site(n_sites);
        let mut cores = Vec::with_capacity(n_sites);
        for j in 0..n_sites {
            let (r_l, r_r) = site_dims(n_sites, bond, j);
            let cols = if j == center { r_r * d_out } else { r_r };
            let mut pair = Vec::with_capacity(2);
            for s in 0..2 {
                let mut r = rng::stream(seed, "mps-init", &[j as u64, s as u64]);
                let noise = if j == center { scale } else { 1e-2 };
                let mut t = Tensor::uniform(vec![r_l, cols], -noise, noise, &mut r);
                if j != center {
                    for d in 0..r_l.min(r_r) {
                        t.data_mut()[d * cols + d] += 1.0;
                    }
                }
                pair.push(pset.register(format!("{prefix}.site{j}.s{s}"), t));
            }
            cores.push([pair[0], pair[1]]);
        }
        Ok(MpsDecoder { n_sites, bond, d_out, center, cores })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn bond(&self) -> usize {
        self.bond
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn param_count(&self) -> usize {
        decoder_param_count(self.n_sites, self.bond, self.d_out)
    }

    pub fn core_ids(&self) -> &[[ParamId; 2]] {
        &self.cores
    }

    fn check_core_shape(&self, pset_shape: &[usize], site: usize) -> Result<()> {
        let (r_l, r_r) = site_dims(self.n_sites, self.bond, site);
        let cols = if site == self.center { r_r * self.d_out } else { r_r };
        if pset_shape != [r_l, cols] {
            return Err(Error::shape(
                "mps_contract",
                format!("site {site}: core shape {pset_shape:?}, expected [{r_l}, {cols}]"),
            ));
        }
        Ok(())
    }

    /// Site matrix on the tape: xi0 * A0 + xi1 * A1 (exact pick for one-hot
    /// features), with tape-node inputs mixed through scalar multiplication.
    fn site_matrix(&self, tape: &mut Tape, bind: &TapeBinding, site: usize, input: MpsInput) -> Result<TensorId> {
        let [a0, a1] = self.cores[site];
        self.check_core_shape(tape.value(bind.id(a0)).shape(), site)?;
        self.check_core_shape(tape.value(bind.id(a1)).shape(), site)?;
        match input {
            MpsInput::Value(x) => {
                let (xi0, xi1) = feature_map(x)?;
                if xi1 == 0.0 {
                    Ok(bind.id(a0))
                } else if xi0 == 0.0 {
                    Ok(bind.id(a1))
                } else {
                    let m0 = tape.scale(bind.id(a0), xi0)?;
                    let m1 = tape.scale(bind.id(a1), xi1)?;
                    tape.add(m0, m1)
                }
            }
            MpsInput::Node(v) => {
                // Domain check on the current value; gradient flows through
                // the smul path.
                feature_map(tape.value(v).item()?)?;
                let xi1 = tape.scale(v, -1.0)?;
                let xi1 = tape.add_scalar(xi1, 1.0)?;
                let m0 = tape.smul(v, bind.id(a0))?;
                let m1 = tape.smul(xi1, bind.id(a1))?;
                tape.add(m0, m1)
            }
        }
    }

    /// Left-to-right contraction producing a [d_out] node. Gradients flow to
    /// every core and to any tape-node input.
    pub fn contract(&self, tape: &mut Tape, bind: &TapeBinding, inputs: &[MpsInput]) -> Result<TensorId> {
        if inputs.len() != self.n_sites {
            return Err(Error::shape(
                "mps_contract",
                format!("{} inputs for {} sites", inputs.len(), self.n_sites),
            ));
        }
        // Carry through the sites before the center: [1, r].
        let mut carry: Option<TensorId> = None;
        for j in 0..self.center {
            let m = self.site_matrix(tape, bind, j, inputs[j])?;
            carry = Some(match carry {
                None => m,
                Some(c) => tape.matmul(c, m)?,
            });
        }
        // Center: widen to [d_out, r_r] by splitting the output leg.
        let c_mat = self.site_matrix(tape, bind, self.center, inputs[self.center])?;
        let mid = match carry {
            None => c_mat,
            Some(c) => tape.matmul(c, c_mat)?,
        };
        let r_r = site_dims(self.n_sites, self.bond, self.center).1;
        let mid = tape.reshape(mid, vec![r_r, self.d_out])?;
        let mut carry = tape.transpose(mid)?;
        // Remaining sites: [d_out, r] times [r, r'].
        for j in self.center + 1..self.n_sites {
            let m = self.site_matrix(tape, bind, j, inputs[j])?;
            carry = tape.matmul(carry, m)?;
        }
        tape.reshape(carry, vec![self.d_out])
    }

    /// Contraction over plain numbers without touching a tape; used for
    /// shifted gradient evaluations and external bindings.
    pub fn contract_values(&self, pset: &ParamSet, inputs: &[f64]) -> Result<Vec<f64>> {
        if inputs.len() != self.n_sites {
            return Err(Error::shape(
                "mps_contract",
                format!("{} inputs for {} sites", inputs.len(), self.n_sites),
            ));
        }
        let site_value = |site: usize, x: f64| -> Result<Vec<f64>> {
            let [a0, a1] = self.cores[site];
            let (v0, v1) = (pset.value(a0), pset.value(a1));
            self.check_core_shape(v0.shape(), site)?;
            self.check_core_shape(v1.shape(), site)?;
            let (xi0, xi1) = feature_map(x)?;
            Ok(v0
                .data()
                .iter()
                .zip(v1.data())
                .map(|(a, b)| xi0 * a + xi1 * b)
                .collect())
        };
        // [1, r] carry up to the center.
        let mut carry: Option<Vec<f64>> = None;
        for j in 0..self.center {
            let (r_l, r_r) = site_dims(self.n_sites, self.bond, j);
            let m = site_value(j, inputs[j])?;
            carry = Some(match carry {
                None => m,
                Some(c) => matvec_left(&c, &m, r_l, r_r),
            });
        }
        let (c_rl, c_rr) = site_dims(self.n_sites, self.bond, self.center);
        let cols = c_rr * self.d_out;
        let cm = site_value(self.center, inputs[self.center])?;
        let mid = match carry {
            None => cm,
            Some(c) => matvec_left(&c, &cm, c_rl, cols),
        };
        // mid is [r_r * d_out] laid out bond-major; transpose to [d_out, r_r].
        let mut carry2 = vec![0.0; self.d_out * c_rr];
        for b in 0..c_rr {
            for o in 0..self.d_out {
                carry2[o * c_rr + b] = mid[b * self.d_out + o];
            }
        }
        let mut width = c_rr;
        for j in self.center + 1..self.n_sites {
            let (r_l, r_r) = site_dims(self.n_sites, self.bond, j);
            debug_assert_eq!(width, r_l);
            let m = site_value(j, inputs[j])?;
            let mut next = vec![0.0; self.d_out * r_r];
            for o in 0..self.d_out {
                for c in 0..r_r {
                    let mut acc = 0.0;
                    for l in 0..r_l {
                        acc += carry2[o * r_l + l] * m[l * r_r + c];
                    }
                    next[o * r_r + c] = acc;
                }
            }
            carry2 = next;
            width = r_r;
        }
        debug_assert_eq!(width, 1);
        Ok(carry2)
    }
}

/// Row vector [p] times matrix [p, q].
fn matvec_left(v: &[f64], m: &[f64], p: usize, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; q];
    for (i, &vi) in v.iter().enumerate().take(p) {
        if vi == 0.0 {
            continue;
        }
        for j in 0..q {
            out[j] += vi * m[i * q + j];
        }
    }
    out
}
