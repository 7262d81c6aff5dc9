use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use forge_core::ball::enumerate_ball_types;
use forge_core::labeling::Q;
use forge_core::snapshot::{load_labeling, save_text, write_atomic, Loaded};
use forge_core::{Backend, Element, NONE};

use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    /// One character per element of ℤ, `|` on markers.
    Strip,
    /// Binary PPM of a ℤ² window, one pixel per element.
    Ppm,
    /// Ball-type census of the layer's truncation.
    Csv,
}

fn dim(l: &Loaded) -> Option<usize> {
    match l.win.gs.backend {
        Backend::Lattice { dim } => Some(dim),
        _ => None,
    }
}

fn emit(out: Option<PathBuf>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => write_atomic(&path, |w| w.write_all(bytes))?,
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Usage(e.to_string()))?,
    }
    Ok(())
}

/// Deterministic label color; markers are white.
fn color(label: u32) -> [u8; 3] {
    if label == Q {
        return [255, 255, 255];
    }
    let mut h = u64::from(label).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h ^= h >> 29;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 32;
    // keep colors away from white and black
    [(h as u8) / 2 + 40, ((h >> 8) as u8) / 2 + 40, ((h >> 16) as u8) / 2 + 40]
}

pub fn strip(l: &Loaded, layer: usize, from: i64, to: i64) -> String {
    let mut s = String::with_capacity((to - from + 2).max(0) as usize);
    for x in from..=to {
        s.push(match l.win.index_of(&Element::Lattice(vec![x])) {
            None => ' ',
            Some(i) if l.lab.label(layer, i) == Q => '|',
            Some(_) => '.',
        });
    }
    s.push('\n');
    s
}

pub fn ppm(l: &Loaded, layer: usize) -> Vec<u8> {
    let r = l.win.radius as i64;
    let w = 2 * r + 1;
    let mut out = format!("P6\n{w} {w}\n255\n").into_bytes();
    for y in (-r..=r).rev() {
        for x in -r..=r {
            let px = match l.win.index_of(&Element::Lattice(vec![x, y])) {
                Some(i) if i != NONE => color(l.lab.label(layer, i)),
                _ => [0, 0, 0],
            };
            out.extend_from_slice(&px);
        }
    }
    out
}

fn check_layer(l: &Loaded, layer: usize) -> CliResult<()> {
    if layer == 0 || layer > l.lab.depth() {
        return Err(CliError::Usage(format!("layer {layer} outside 1..={}", l.lab.depth())));
    }
    Ok(())
}

pub fn render(
    path: &Path,
    layer: usize,
    format: Format,
    from: Option<i64>,
    to: Option<i64>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let l = load_labeling(path)?;
    check_layer(&l, layer)?;
    match format {
        Format::Strip => {
            if dim(&l) != Some(1) {
                return Err(CliError::Usage("text strips are drawn for ℤ only".into()));
            }
            let r = l.win.radius as i64;
            emit(out, strip(&l, layer, from.unwrap_or(-r), to.unwrap_or(r)).as_bytes())
        }
        Format::Ppm => {
            if dim(&l) != Some(2) {
                return Err(CliError::Usage("PPM images are drawn for ℤ² only".into()));
            }
            emit(out, &ppm(&l, layer))
        }
        Format::Csv => {
            let t = l.sch.s(layer);
            census_of(&l, layer, t, None, None, out)
        }
    }
}

fn census_of(
    l: &Loaded,
    j: usize,
    t: u64,
    level: Option<usize>,
    core: Option<u64>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    check_layer(l, j)?;
    let level = level.unwrap_or_else(|| l.sch.f(j));
    let core = match core {
        Some(c) => c,
        None => {
            l.lab.core.checked_sub(t).ok_or(forge_core::ForgeError::CoreTooSmall { needed: t, have: l.lab.core })?
        }
    };
    let census = enumerate_ball_types(&l.win, &l.lab, j, level, t, core)?;
    let csv = census.to_csv(&l.win);
    match out {
        Some(p) => {
            save_text(&p, &csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn census(
    path: &Path,
    j: usize,
    t: u64,
    level: Option<usize>,
    core: Option<u64>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let l = load_labeling(path)?;
    census_of(&l, j, t, level, core, out)
}
