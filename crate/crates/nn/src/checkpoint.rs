//! Text checkpoint format.
//!
//! ```text
//! voltmesh-nn 1
//! input <input_dim> layers <count>
//! layer <in> <out> <plain|noisy> <identity|relu|tanh>
//! nu_w <rows> <cols>
//! <row of cols values>        (repeated rows times)
//! nu_b 1 <out>
//! <out values>
//! sigma_w ... / sigma_b ...   (noisy layers only)
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle reproduces parameters bit for bit. Noise samples are not
//! stored; loaded networks start with zero noise.

use std::fmt::Write as _;

use crate::layer::{Activation, DenseLayer, LayerKind};
use crate::network::Network;
use crate::{NnError, Result};

pub const CHECKPOINT_MAGIC: &str = "voltmesh-nn";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(net: &Network) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(s, "input {} layers {}", net.input_dim(), net.layers().len());
    for l in net.layers() {
        let _ = writeln!(
            s,
            "layer {} {} {} {}",
            l.in_dim,
            l.out_dim,
            l.kind.name(),
            l.activation.name()
        );
        write_array(&mut s, "nu_w", l.in_dim, l.out_dim, &l.nu_w);
        write_array(&mut s, "nu_b", 1, l.out_dim, &l.nu_b);
        if l.kind == LayerKind::Noisy {
            write_array(&mut s, "sigma_w", l.in_dim, l.out_dim, &l.sigma_w);
            write_array(&mut s, "sigma_b", 1, l.out_dim, &l.sigma_b);
        }
    }
    s
}

fn write_array(s: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    let _ = writeln!(s, "{name} {rows} {cols}");
    for r in 0..rows {
        let row: Vec<String> = data[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| v.to_string())
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.last = i + 1;
                    if !l.trim().is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(self.err("unexpected end of checkpoint")),
            }
        }
    }

    fn err(&self, message: impl Into<String>) -> NnError {
        NnError::Checkpoint {
            line: self.last,
            message: message.into(),
        }
    }

    fn parse_usize(&self, tok: Option<&str>, what: &str) -> Result<usize> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err(format!("expected integer {what}")))
    }

    fn read_array(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let header = self.next_line()?;
        let mut it = header.split_whitespace();
        if it.next() != Some(name) {
            return Err(self.err(format!("expected array '{name}'")));
        }
        let r = self.parse_usize(it.next(), "rows")?;
        let c = self.parse_usize(it.next(), "cols")?;
        if (r, c) != (rows, cols) {
            return Err(self.err(format!(
                "array '{name}' has shape {r}x{c}, expected {rows}x{cols}"
            )));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let before = out.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| self.err(format!("bad number '{tok}'")))?;
                out.push(v);
            }
            if out.len() - before != cols {
                return Err(self.err(format!("row of '{name}' has wrong length")));
            }
        }
        Ok(out)
    }
}

pub fn load_checkpoint(text: &str) -> Result<Network> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let head = lines.next_line()?;
    let mut it = head.split_whitespace();
    if it.next() != Some(CHECKPOINT_MAGIC) {
        return Err(lines.err("not a voltmesh-nn checkpoint"));
    }
    let version = lines.parse_usize(it.next(), "version")?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(lines.err(format!("unsupported checkpoint version {version}")));
    }
    let dims = lines.next_line()?;
    let mut it = dims.split_whitespace();
    if it.next() != Some("input") {
        return Err(lines.err("expected 'input'"));
    }
    let input_dim = lines.parse_usize(it.next(), "input dimension")?;
    if it.next() != Some("layers") {
        return Err(lines.err("expected 'layers'"));
    }
    let count = lines.parse_usize(it.next(), "layer count")?;
    let mut layers = Vec::with_capacity(count);
    let mut fan_in = input_dim;
    for _ in 0..count {
        let l = lines.next_line()?;
        let mut it = l.split_whitespace();
        if it.next() != Some("layer") {
            return Err(lines.err("expected 'layer'"));
        }
        let in_dim = lines.parse_usize(it.next(), "layer input")?;
        let out_dim = lines.parse_usize(it.next(), "layer output")?;
        if in_dim != fan_in {
            return Err(lines.err(format!("layer input {in_dim} does not follow {fan_in}")));
        }
        let kind = it
            .next()
            .and_then(LayerKind::from_name)
            .ok_or_else(|| lines.err("unknown layer kind"))?;
        let activation = it
            .next()
            .and_then(Activation::from_name)
            .ok_or_else(|| lines.err("unknown activation"))?;
        let nu_w = lines.read_array("nu_w", in_dim, out_dim)?;
        let nu_b = lines.read_array("nu_b", 1, out_dim)?;
        let (sigma_w, sigma_b, eps_w, eps_b) = match kind {
            LayerKind::Plain => (vec![], vec![], vec![], vec![]),
            LayerKind::Noisy => (
                lines.read_array("sigma_w", in_dim, out_dim)?,
                lines.read_array("sigma_b", 1, out_dim)?,
                vec![0.0; in_dim * out_dim],
                vec![0.0; out_dim],
            ),
        };
        layers.push(DenseLayer {
            in_dim,
            out_dim,
            kind,
            activation,
            nu_w,
            nu_b,
            sigma_w,
            sigma_b,
            eps_w,
            eps_b,
        });
        fan_in = out_dim;
    }
    Ok(Network::from_layers(input_dim, layers))
}
