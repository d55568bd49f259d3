//! Flat text serialization for network parameters.
//!
//! Format: a header line `layers d0 d1 ... dk activation` (d0 = input dim,
//! d1..dk = layer widths), then for each layer one line with the weight
//! matrix in row-major order (shape out×in) and one line with the biases.
//! Values are decimal with 17 significant digits, so the round trip is
//! lossless.

use std::path::Path;

use crate::error::{Error, Result};

use super::{Activation, Layer, Network, NetworkSpec};

/// Formats an f64 with 17 significant digits (lossless round trip).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Network {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("layers ");
        out.push_str(&self.spec().input_dim.to_string());
        for w in &self.spec().layer_widths {
            out.push(' ');
            out.push_str(&w.to_string());
        }
        out.push(' ');
        out.push_str(self.spec().activation.name());
        out.push('\n');
        for layer in self.layers() {
            let ws: Vec<String> = layer.weights().iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&ws.join(" "));
            out.push('\n');
            let bs: Vec<String> = layer.biases().iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&bs.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (line_no, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty network file".into() })?;
        let mut toks = header.split_whitespace();
        if toks.next() != Some("layers") {
            return Err(Error::Parse { line: line_no + 1, msg: "expected `layers` header".into() });
        }
        let mut dims: Vec<usize> = Vec::new();
        let mut activation = None;
        for tok in toks {
            match tok.parse::<usize>() {
                Ok(d) => dims.push(d),
                Err(_) => {
                    activation = Some(Activation::parse(tok)?);
                    break;
                }
            }
        }
        let activation = activation.ok_or_else(|| Error::Parse {
            line: line_no + 1,
            msg: "missing activation in header".into(),
        })?;
        if dims.len() < 2 {
            return Err(Error::Parse { line: line_no + 1, msg: "header needs >= 2 dims".into() });
        }
        let spec = NetworkSpec::new(dims[0], dims[1..].to_vec(), activation, 0)?;

        let mut layers = Vec::new();
        let mut in_dim = spec.input_dim;
        for &out_dim in &spec.layer_widths {
            let weights = parse_floats(&mut lines, in_dim * out_dim, "weights")?;
            let biases = parse_floats(&mut lines, out_dim, "biases")?;
            layers.push(Layer::from_parts(in_dim, out_dim, weights, biases));
            in_dim = out_dim;
        }
        Ok(Network::from_parts(spec, layers))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

fn parse_floats<'a, I>(lines: &mut I, expect: usize, what: &str) -> Result<Vec<f64>>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (line_no, line) = lines.next().ok_or_else(|| Error::Parse {
        line: 0,
        msg: format!("missing {what} line"),
    })?;
    let vals: std::result::Result<Vec<f64>, _> =
        line.split_whitespace().map(|t| t.parse::<f64>()).collect();
    let vals = vals.map_err(|e| Error::Parse { line: line_no + 1, msg: e.to_string() })?;
    if vals.len() != expect {
        return Err(Error::Parse {
            line: line_no + 1,
            msg: format!("expected {expect} {what} values, found {}", vals.len()),
        });
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse { line: line_no + 1, msg: format!("non-finite {what}") });
    }
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip_is_bit_exact() {
        let spec = NetworkSpec::new(3, vec![5, 2], Activation::Tanh, 99).unwrap();
        let net = Network::init(&spec).unwrap();
        let restored = Network::from_text(&net.to_text()).unwrap();
        assert_eq!(net.param_len(), restored.param_len());
        for i in 0..net.param_len() {
            assert_eq!(net.param(i).to_bits(), restored.param(i).to_bits());
        }
        assert_eq!(restored.spec().layer_widths, vec![5, 2]);
        assert_eq!(restored.spec().activation, Activation::Tanh);
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(Network::from_text("").is_err());
        assert!(Network::from_text("layers 2 relu").is_err());
        assert!(Network::from_text("layers 2 2 relu\n1 2 3 x\n0 0").is_err());
        // wrong count
        assert!(Network::from_text("layers 2 2 relu\n1 2 3\n0 0").is_err());
    }
}
