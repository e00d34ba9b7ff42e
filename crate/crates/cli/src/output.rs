//! File emission. Floats are printed with the shortest round-trip
//! representation so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use invariant_kit::{IntervalVector, NestedFamily};
use nalgebra::DMatrix;
use serde::Serialize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// `t, x1_lo..xn_lo, x1_hi..xn_hi, certified`, one row per member.
pub fn family_csv(fam: &NestedFamily) -> String {
    let n = fam.members.first().map_or(0, |m| m.state.dim());
    let mut s = String::from("t");
    for suffix in ["lo", "hi"] {
        for i in 1..=n {
            write!(s, ",x{i}_{suffix}").unwrap();
        }
    }
    s.push_str(",certified\n");
    for m in &fam.members {
        write!(s, "{}", m.t).unwrap();
        for v in m.state.lower().iter().chain(m.state.upper()) {
            write!(s, ",{v}").unwrap();
        }
        writeln!(s, ",{}", m.certified as u8).unwrap();
    }
    s
}

/// Vertices, counter-clockwise, of the projection of `{ M y : y ∈ ybox }`
/// onto coordinates `(a, b)`. The image is a zonogon: the centre plus one
/// segment per column of `M`.
pub fn projection_polygon(m: &DMatrix<f64>, ybox: &IntervalVector, a: usize, b: usize) -> Vec<[f64; 2]> {
    let mid = ybox.midpoint();
    let rad: Vec<f64> = ybox.width().iter().map(|w| w / 2.0).collect();
    let mut c = [0.0, 0.0];
    let mut gens = Vec::new();
    for j in 0..m.ncols() {
        c[0] += m[(a, j)] * mid[j];
        c[1] += m[(b, j)] * mid[j];
        let mut g = [m[(a, j)] * rad[j], m[(b, j)] * rad[j]];
        if g == [0.0, 0.0] {
            continue;
        }
        if g[1] < 0.0 || (g[1] == 0.0 && g[0] < 0.0) {
            g = [-g[0], -g[1]];
        }
        gens.push(g);
    }
    if gens.is_empty() {
        return vec![c];
    }
    gens.sort_by(|p, q| p[1].atan2(p[0]).total_cmp(&q[1].atan2(q[0])));
    let mut v = gens.iter().fold(c, |v, g| [v[0] - g[0], v[1] - g[1]]);
    let mut out = Vec::with_capacity(2 * gens.len());
    for sign in [2.0, -2.0] {
        for g in &gens {
            out.push(v);
            v = [v[0] + sign * g[0], v[1] + sign * g[1]];
        }
    }
    out
}

/// `t, vertex, xa, xb` rows for every member of the family.
pub fn projection_csv(fam: &NestedFamily, m: &DMatrix<f64>, a: usize, b: usize) -> String {
    let mut s = format!("t,vertex,x{},x{}\n", a + 1, b + 1);
    for mem in &fam.members {
        for (k, p) in projection_polygon(m, &mem.state.to_box(), a, b).iter().enumerate() {
            writeln!(s, "{},{k},{},{}", mem.t, p[0], p[1]).unwrap();
        }
    }
    s
}
