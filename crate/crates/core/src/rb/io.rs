//! Plain-text storage of an [`RBSpace`].
//!
//! One record per line, `tag,values...`; lines starting with `#` are
//! comments (the first one is normally a run manifest). Floats use the
//! shortest representation that round-trips.

use std::io::{BufRead, Write};

use super::space::RBSpace;
use crate::error::{Error, Result};
use crate::fem::FinParams;
use crate::linalg::DenseMatrix;
use crate::scalar::Real;

const FORMAT: &str = "rbspace-v1";

fn join<T: Real>(v: &[T]) -> String {
    v.iter().map(|x| format!("{:e}", x.to_f64_lossy())).collect::<Vec<_>>().join(",")
}

pub fn write_space<T: Real, W: Write>(out: &mut W, space: &RBSpace<T>, manifest: &str) -> Result<()> {
    if !manifest.is_empty() {
        writeln!(out, "# {manifest}")?;
    }
    let n = space.dim();
    let ndof = space.basis.first().map_or(0, Vec::len);
    writeln!(out, "format,{FORMAT}")?;
    writeln!(out, "dims,{n},{},{ndof}", space.num_components)?;
    for p in &space.snapshot_params {
        let mut v = vec![p.k1, p.k2, p.biot_mean];
        v.extend((0..space.num_modes()).map(|k| p.y.get(k).copied().unwrap_or(0.0)));
        writeln!(out, "param,{}", join(&v))?;
    }
    for xi in &space.basis {
        writeln!(out, "basis,{}", join(xi))?;
    }
    for m in &space.reduced {
        for i in 0..n {
            writeln!(out, "reduced,{}", join(m.row(i)))?;
        }
    }
    writeln!(out, "load,{}", join(&space.reduced_load))?;
    writeln!(out, "output,{}", join(&space.reduced_output))?;
    for c in &space.residual {
        writeln!(out, "residual,{}", join(c))?;
    }
    Ok(())
}

pub fn read_space<T: Real, R: BufRead>(input: R) -> Result<RBSpace<T>> {
    let mut records: Vec<(usize, String, Vec<f64>)> = Vec::new();
    let mut format_seen = false;
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut fields = t.split(',');
        let tag = fields.next().unwrap_or_default().to_string();
        if tag == "format" {
            let f = fields.next().unwrap_or_default();
            if f != FORMAT {
                return Err(Error::Parse { line: lineno, message: format!("unsupported format '{f}'") });
            }
            format_seen = true;
            continue;
        }
        let values = fields
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse { line: lineno, message: format!("'{s}': {e}") }))
            .collect::<Result<Vec<_>>>()?;
        records.push((lineno, tag, values));
    }
    if !format_seen {
        return Err(Error::Parse { line: 1, message: format!("missing 'format,{FORMAT}' record") });
    }
    let mut it = records.into_iter().peekable();
    let (line, tag, dims) = it.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    if tag != "dims" || dims.len() != 3 {
        return Err(Error::Parse { line, message: "expected 'dims,N,Q,ndof'".into() });
    }
    let (n, q, ndof) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    if q < 3 {
        return Err(Error::Parse { line, message: format!("{q} affine components; need at least 3") });
    }
    let mut take = |want: &str, len: Option<usize>| -> Result<Vec<f64>> {
        let (line, tag, v) = it.next().ok_or(Error::Parse { line: 0, message: format!("unexpected end of file, expected '{want}'") })?;
        if tag != want {
            return Err(Error::Parse { line, message: format!("expected '{want}', found '{tag}'") });
        }
        if let Some(l) = len {
            if v.len() != l {
                return Err(Error::Parse { line, message: format!("'{want}' has {} values, expected {l}", v.len()) });
            }
        }
        Ok(v)
    };
    let conv = |v: Vec<f64>| v.into_iter().map(T::of).collect::<Vec<T>>();
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let v = take("param", Some(q))?;
        params.push(FinParams { k1: v[0], k2: v[1], biot_mean: v[2], y: v[3..].to_vec() });
    }
    let mut basis = Vec::with_capacity(n);
    for _ in 0..n {
        basis.push(conv(take("basis", Some(ndof))?));
    }
    let mut reduced = Vec::with_capacity(q);
    for _ in 0..q {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for (j, x) in take("reduced", Some(n))?.into_iter().enumerate() {
                m[(i, j)] = T::of(x);
            }
        }
        reduced.push(m);
    }
    let reduced_load = conv(take("load", Some(n))?);
    let reduced_output = conv(take("output", Some(n))?);
    let mut residual = Vec::with_capacity(1 + n * q);
    for _ in 0..1 + n * q {
        residual.push(conv(take("residual", None)?));
    }
    if let Some((line, tag, _)) = it.next() {
        return Err(Error::Parse { line, message: format!("unexpected record '{tag}'") });
    }
    Ok(RBSpace { num_components: q, basis, snapshot_params: params, reduced, reduced_load, reduced_output, residual })
}
