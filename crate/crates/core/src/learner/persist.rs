//! Plain-text weight container.
//!
//! ```text
//! beamho-model 1
//! input <width>
//! lstm <input> <hidden> <return_sequences>
//! dense <input> <output> <activation>
//! dropout <rate>
//! params <count>
//! <one value per line>
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a reload is exact.

use std::io::{BufRead, Write};

use ndarray::Array2;

use super::{Activation, Dense, Dropout, Layer, Lstm, ModelGraph};
use crate::error::{Error, Result};

const MAGIC: &str = "beamho-model 1";

pub fn save<W: Write>(model: &ModelGraph, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "input {}", model.input_width)?;
    for layer in &model.layers {
        match layer {
            Layer::Lstm(l) => writeln!(w, "lstm {} {} {}", l.input, l.hidden, l.return_sequences)?,
            Layer::Dense(d) => writeln!(w, "dense {} {} {}", d.input, d.output, d.activation.name())?,
            Layer::Dropout(d) => writeln!(w, "dropout {}", d.rate)?,
        }
    }
    let flat = model.flat_params();
    writeln!(w, "params {}", flat.len())?;
    for v in flat {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse(format!("bad or missing {what}")))
}

pub fn load<R: BufRead>(r: R) -> Result<ModelGraph> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines.next().transpose()?.ok_or_else(|| Error::Parse("truncated model file".into()))
    };
    if next()? != MAGIC {
        return Err(Error::Parse("not a model file".into()));
    }
    let header = next()?;
    let mut it = header.split_whitespace();
    if it.next() != Some("input") {
        return Err(Error::Parse("missing input width".into()));
    }
    let input_width: usize = parse(it.next(), "input width")?;
    let mut layers = Vec::new();
    let count: usize = loop {
        let line = next()?;
        let mut t = line.split_whitespace();
        match t.next() {
            Some("lstm") => {
                let (input, hidden) = (parse(t.next(), "lstm input")?, parse(t.next(), "lstm hidden")?);
                let return_sequences = parse(t.next(), "lstm return_sequences")?;
                layers.push(Layer::Lstm(Lstm {
                    input,
                    hidden,
                    return_sequences,
                    w_x: Array2::zeros((input, 4 * hidden)),
                    w_h: Array2::zeros((hidden, 4 * hidden)),
                    b: Array2::zeros((1, 4 * hidden)),
                }));
            }
            Some("dense") => {
                let (input, output) = (parse(t.next(), "dense input")?, parse(t.next(), "dense output")?);
                let activation = Activation::parse(t.next().unwrap_or(""))?;
                layers.push(Layer::Dense(Dense {
                    input,
                    output,
                    activation,
                    w: Array2::zeros((input, output)),
                    b: Array2::zeros((1, output)),
                }));
            }
            Some("dropout") => layers.push(Layer::Dropout(Dropout::new(parse(t.next(), "dropout rate")?)?)),
            Some("params") => break parse(t.next(), "parameter count")?,
            other => return Err(Error::Parse(format!("unknown layer record {other:?}"))),
        }
    };
    let mut model = ModelGraph { input_width, layers };
    if count != model.num_params() {
        return Err(Error::Parse(format!("{count} parameters declared, architecture has {}", model.num_params())));
    }
    let flat = (0..count).map(|_| parse(Some(next()?.trim()), "parameter")).collect::<Result<Vec<f64>>>()?;
    model.set_flat_params(&flat)?;
    Ok(model)
}
