use rand::Rng;

use super::dist::sigmoid;
use super::{accumulate_rows, all_finite, normal_weights, row_dot, ParamBlock, ParamBlockMut, ParamGroup};
use crate::error::check_len;
use crate::{Error, Result};

/// Binary shape (mask) block: `E_bin(m, h) = -mᵀ W h - bᵀ m`.
///
/// Carries no hidden bias; in the mixed RBM the shared hidden bias lives in
/// the appearance block.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryShapeParams {
    n_pix: usize,
    n_hid: usize,
    /// `[n_pix × n_hid]`
    pub w_shape: Vec<f32>,
    pub b_shape: Vec<f32>,
}

pub(crate) fn mask_as_f64(m: &[bool]) -> Vec<f64> {
    m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

impl BinaryShapeParams {
    pub fn zeros(n_pix: usize, n_hid: usize) -> Self {
        BinaryShapeParams {
            n_pix,
            n_hid,
            w_shape: vec![0.0; n_pix * n_hid],
            b_shape: vec![0.0; n_pix],
        }
    }

    /// Small random weights, mask biases at the uninformative prior 0.5.
    pub fn init<R: Rng + ?Sized>(n_pix: usize, n_hid: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_pix, n_hid);
        p.w_shape = normal_weights(n_pix * n_hid, 0.01, rng);
        p
    }

    pub fn from_parts(n_pix: usize, n_hid: usize, w_shape: Vec<f32>, b_shape: Vec<f32>) -> Result<Self> {
        let p = BinaryShapeParams {
            n_pix,
            n_hid,
            w_shape,
            b_shape,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_pix(&self) -> usize {
        self.n_pix
    }

    pub fn n_hid(&self) -> usize {
        self.n_hid
    }

    pub fn validate(&self) -> Result<()> {
        check_len("w_shape", self.n_pix * self.n_hid, self.w_shape.len())?;
        check_len("b_shape", self.n_pix, self.b_shape.len())?;
        for b in self.blocks() {
            if !all_finite(b.values) {
                return Err(Error::NonFinite {
                    block: b.name.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn blocks(&self) -> Vec<ParamBlock<'_>> {
        vec![
            ParamBlock {
                name: "w_shape",
                shape: vec![self.n_pix, self.n_hid],
                values: &self.w_shape,
            },
            ParamBlock {
                name: "b_shape",
                shape: vec![self.n_pix],
                values: &self.b_shape,
            },
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        vec![
            ParamBlockMut {
                name: "w_shape",
                group: ParamGroup::ShapeWeight,
                values: &mut self.w_shape,
            },
            ParamBlockMut {
                name: "b_shape",
                group: ParamGroup::Bias,
                values: &mut self.b_shape,
            },
        ]
    }

    pub fn energy(&self, m: &[f64], h: &[f64]) -> Result<f64> {
        check_len("mask", self.n_pix, m.len())?;
        check_len("hidden vector", self.n_hid, h.len())?;
        Ok(-(0..self.n_pix)
            .map(|i| m[i] * (self.b_shape[i] as f64 + row_dot(&self.w_shape, i, h)))
            .sum::<f64>())
    }

    /// Pre-sigmoid mask input `b_i + W_i · h`.
    pub(crate) fn mask_logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.n_pix)
            .map(|i| self.b_shape[i] as f64 + row_dot(&self.w_shape, i, h))
            .collect()
    }

    /// Bernoulli means `p(m_i = 1 | h)`.
    pub fn mask_conditional(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_len("hidden vector", self.n_hid, h.len())?;
        Ok(self.mask_logits(h).into_iter().map(sigmoid).collect())
    }

    /// Adds `Σ_i m_i W_ij` into `out` (no bias).
    pub(crate) fn hidden_input_into(&self, m: &[f64], out: &mut [f64]) {
        accumulate_rows(&self.w_shape, m, out);
    }
}

/// A plain binary-binary RBM: a shape block plus its own hidden bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRbm {
    pub visible: BinaryShapeParams,
    pub b_hid: Vec<f32>,
}

impl BinaryRbm {
    pub fn zeros(n_vis: usize, n_hid: usize) -> Self {
        BinaryRbm {
            visible: BinaryShapeParams::zeros(n_vis, n_hid),
            b_hid: vec![0.0; n_hid],
        }
    }

    pub fn n_vis(&self) -> usize {
        self.visible.n_pix()
    }

    pub fn n_hid(&self) -> usize {
        self.visible.n_hid()
    }

    pub fn energy(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        let e = self.visible.energy(v, h)?;
        Ok(e - self.b_hid.iter().zip(h).map(|(&b, &x)| b as f64 * x).sum::<f64>())
    }

    pub fn hidden_conditional(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("visible vector", self.n_vis(), v.len())?;
        let mut input: Vec<f64> = self.b_hid.iter().map(|&b| b as f64).collect();
        self.visible.hidden_input_into(v, &mut input);
        Ok(input.into_iter().map(sigmoid).collect())
    }

    pub fn visible_conditional(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.visible.mask_conditional(h)
    }

    pub fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let mut blocks = self.visible.blocks_mut();
        blocks.push(ParamBlockMut {
            name: "b_hid",
            group: ParamGroup::Bias,
            values: &mut self.b_hid,
        });
        blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shape_is_half() {
        let p = BinaryShapeParams::zeros(3, 2);
        assert!(p.mask_conditional(&[1.0, 1.0]).unwrap().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn bias_four() {
        let mut p = BinaryShapeParams::zeros(1, 1);
        p.b_shape[0] = 4.0;
        let q = p.mask_conditional(&[0.0]).unwrap()[0];
        assert!((q - 0.982_013_790_037_908_5).abs() < 1e-12);
    }

    #[test]
    fn mask_conditional_matches_enumeration() {
        // 2 pixels, 1 hidden; p(m_i = 1 | h) from the joint over m given h
        let p = BinaryShapeParams::from_parts(2, 1, vec![0.7, -1.3], vec![0.25, -0.5]).unwrap();
        for h in [[0.0], [1.0]] {
            let mut z = 0.0;
            let mut marg = [0.0; 2];
            for bits in 0..4u32 {
                let m = [(bits & 1) as f64, ((bits >> 1) & 1) as f64];
                let w = (-p.energy(&m, &h).unwrap()).exp();
                z += w;
                marg[0] += w * m[0];
                marg[1] += w * m[1];
            }
            let q = p.mask_conditional(&h).unwrap();
            for i in 0..2 {
                assert!((marg[i] / z - q[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let p = BinaryShapeParams::zeros(2, 2);
        assert!(p.mask_conditional(&[1.0]).is_err());
        assert!(p.energy(&[1.0], &[1.0, 0.0]).is_err());
        assert!(BinaryShapeParams::from_parts(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
    }
}
