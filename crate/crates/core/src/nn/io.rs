//! Network parameter (de)serialization.
//!
//! Plain-text, line-oriented format so checkpoints are diffable and the
//! round trip is exact: Rust prints `f64` values with the shortest decimal
//! representation that parses back to the identical bits.
//!
//! ```text
//! net v1
//! layers <count>
//! layer <out> <in> <activation>
//! <in weights, space-separated>        // one line per output row
//! ...
//! <out bias values, space-separated>
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Mat, Network};

const MAGIC: &str = "net v1";

/// Render a network in the checkpoint text format.
pub fn network_to_string(network: &Network) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "layers {}", network.layers().len());
    for layer in network.layers() {
        let _ = writeln!(
            out,
            "layer {} {} {}",
            layer.output_dim(),
            layer.input_dim(),
            layer.activation.name()
        );
        for r in 0..layer.output_dim() {
            for c in 0..layer.input_dim() {
                if c > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", layer.weights.at(r, c));
            }
            out.push('\n');
        }
        for (i, b) in layer.bias.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{b}");
        }
        out.push('\n');
    }
    out
}

/// Parse the checkpoint text format back into a network.
pub fn network_from_str(text: &str, origin: &Path) -> Result<Network> {
    let parse_err = |msg: String| Error::parse(origin, msg);
    let mut lines = text.lines();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(format!("unexpected end of file, expected {what}")))
    };

    if next("header")? != MAGIC {
        return Err(parse_err(format!("missing `{MAGIC}` header")));
    }
    let count_line = next("layer count")?;
    let count: usize = count_line
        .strip_prefix("layers ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(format!("bad layer count line: `{count_line}`")))?;

    let mut layers = Vec::with_capacity(count);
    for li in 0..count {
        let header = next("layer header")?;
        let mut parts = header.split_whitespace();
        let (out_dim, in_dim, act) = match (parts.next(), parts.next(), parts.next(), parts.next())
        {
            (Some("layer"), Some(o), Some(i), Some(a)) => {
                let o: usize = o
                    .parse()
                    .map_err(|_| parse_err(format!("layer {li}: bad output dim `{o}`")))?;
                let i: usize = i
                    .parse()
                    .map_err(|_| parse_err(format!("layer {li}: bad input dim `{i}`")))?;
                let a = Activation::from_name(a)
                    .ok_or_else(|| parse_err(format!("layer {li}: unknown activation `{a}`")))?;
                (o, i, a)
            }
            _ => return Err(parse_err(format!("layer {li}: bad header `{header}`"))),
        };

        let parse_row = |line: &str, expected: usize, what: &str| -> Result<Vec<f64>> {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(f64::from_str)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(format!("layer {li}: bad value in {what}: {e}")))?;
            if row.len() != expected {
                return Err(parse_err(format!(
                    "layer {li}: {what} has {} values, expected {expected}",
                    row.len()
                )));
            }
            Ok(row)
        };

        let mut weights = Mat::zeros(out_dim, in_dim);
        for r in 0..out_dim {
            let row = parse_row(next("weight row")?, in_dim, "weight row")?;
            for (c, v) in row.into_iter().enumerate() {
                *weights.at_mut(r, c) = v;
            }
        }
        let bias = parse_row(next("bias row")?, out_dim, "bias row")?;
        layers.push(DenseLayer {
            weights,
            bias,
            activation: act,
        });
    }
    Network::new(layers)
}

/// Write a network checkpoint file.
pub fn save_network(network: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, network_to_string(network)).map_err(|e| Error::io(path, e))
}

/// Read a network checkpoint file.
pub fn load_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    network_from_str(&text, path)
}
