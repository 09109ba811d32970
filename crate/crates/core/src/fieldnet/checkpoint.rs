//! Plain-text network checkpoints.
//!
//! ```text
//! uotnet-fieldnet 1
//! layer_dims 3 64 64 64 1
//! hidden tanh
//! head softplus
//! seed 7
//! params 8641
//! <one parameter per line>
//! ```
//!
//! Parameters are written with Rust's shortest round-trip float formatting,
//! so a save/load cycle is bit-exact.

use std::io::{BufRead, Write};

use super::{Activation, FieldNetwork, OutputHead};
use crate::{Error, Result};

const MAGIC: &str = "uotnet-fieldnet 1";

impl FieldNetwork {
    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{MAGIC}")?;
        let dims: Vec<String> = self.layer_dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "layer_dims {}", dims.join(" "))?;
        writeln!(out, "hidden {}", self.hidden.tag())?;
        writeln!(out, "head {}", self.head.tag())?;
        writeln!(out, "seed {}", self.seed)?;
        writeln!(out, "params {}", self.num_params())?;
        for p in self.params() {
            writeln!(out, "{p:?}")?;
        }
        Ok(())
    }

    /// Reads a checkpoint written by [`write_checkpoint`](Self::write_checkpoint).
    /// Consumes exactly the checkpoint's lines, so several can share a stream.
    pub fn read_checkpoint<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut line = String::new();
        let mut next = |line: &mut String| -> Result<String> {
            line.clear();
            let n = input
                .read_line(line)
                .map_err(|e| Error::format("checkpoint", e.to_string()))?;
            if n == 0 {
                return Err(Error::format("checkpoint", "unexpected end of file"));
            }
            Ok(line.trim_end().to_string())
        };
        if next(&mut line)? != MAGIC {
            return Err(Error::format("checkpoint", "missing header"));
        }
        let dims_line = next(&mut line)?;
        let dims = field(&dims_line, "layer_dims")?
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let hidden_line = next(&mut line)?;
        let hidden = Activation::from_tag(field(&hidden_line, "hidden")?)
            .ok_or_else(|| Error::format("checkpoint", "unknown activation"))?;
        let head_line = next(&mut line)?;
        let head = OutputHead::from_tag(field(&head_line, "head")?)
            .ok_or_else(|| Error::format("checkpoint", "unknown head"))?;
        let seed_line = next(&mut line)?;
        let seed: u64 = parse(field(&seed_line, "seed")?)?;
        let count_line = next(&mut line)?;
        let count: usize = parse(field(&count_line, "params")?)?;

        let mut net = FieldNetwork::new(&dims, hidden, head, seed)?;
        if count != net.num_params() {
            return Err(Error::format("checkpoint", "parameter count does not match layer_dims"));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(parse::<f64>(&next(&mut line)?)?);
        }
        net.set_params(&params)?;
        Ok(net)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(&mut std::io::BufReader::new(file))
    }
}

pub(crate) fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' ').or(if rest.is_empty() { Some("") } else { None }))
        .ok_or_else(|| Error::format("checkpoint", format!("expected `{key}`, found `{line}`")))
}

pub(crate) fn parse<T: std::str::FromStr>(s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e: T::Err| Error::format("checkpoint", format!("`{s}`: {e}")))
}
