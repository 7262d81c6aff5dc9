//! JSON persistence for labelings, codeballs, diffs and censuses.
//!
//! Labeling snapshots are streamed: one element record per line inside a
//! single JSON object, hashed while written and parsed without building a
//! document tree.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::{self, DeserializeSeed, MapAccess, SeqAccess, Visitor};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::ball::LabeledBall;
use crate::error::{ForgeError, Result};
use crate::group::GeneratorSystem;
use crate::labeling::Labeling;
use crate::pipeline::{Codeball, DirEntry};
use crate::schedule::ScaledSchedule;
use crate::window::{Bfs, CayleyWindow, NONE};

pub const FORMAT: &str = "forge-labeling/1";

fn io_err(e: io::Error) -> ForgeError {
    ForgeError::Snapshot(e.to_string())
}

/// Writer that hashes everything passing through.
struct Hashing<W> {
    inner: W,
    hash: Sha256,
}

impl<W: Write> Write for Hashing<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hash.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// Streaming SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).map_err(io_err)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(io_err)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

/// Writes `path` atomically: a sibling temporary file, then a rename.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err)?);
        body(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        w.get_ref().sync_all().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(io_err)
}

fn c_prefix(c: u64, depth: u32) -> String {
    (0..depth).map(|k| if c >> k & 1 == 1 { '1' } else { '0' }).collect()
}

fn write_labeling(w: &mut dyn Write, win: &CayleyWindow, sch: &ScaledSchedule, lab: &Labeling) -> io::Result<()> {
    let head = json!({
        "format": FORMAT,
        "group": serde_json::to_value(&win.gs).map_err(io::Error::other)?,
        "schedule": sch.to_json(),
        "R": win.radius,
        "level": win.level,
        "core": lab.core,
        "stage": lab.stage,
        "strict": lab.strict,
        "c_depth": lab.c_depth,
        "depth": lab.depth(),
    });
    let head = serde_json::to_string(&head).map_err(io::Error::other)?;
    // reopen the object to append the element list
    w.write_all(&head.as_bytes()[..head.len() - 1])?;
    w.write_all(b",\"elements\":[\n")?;
    let mut labels = Vec::with_capacity(lab.depth());
    for i in 0..lab.len() {
        labels.clear();
        labels.extend(lab.layers.iter().map(|l| l[i]));
        let rec =
            json!({"word": win.encode(i as u32), "c_prefix": c_prefix(lab.c[i], lab.c_depth), "f_labels": labels});
        if i > 0 {
            w.write_all(b",\n")?;
        }
        serde_json::to_writer(&mut *w, &rec).map_err(io::Error::other)?;
    }
    w.write_all(b"\n]}\n")
}

/// Saves a labeling snapshot; returns the SHA-256 of the bytes written.
pub fn save_labeling(path: &Path, win: &CayleyWindow, sch: &ScaledSchedule, lab: &Labeling) -> Result<String> {
    let mut digest = String::new();
    write_atomic(path, |w| {
        let mut hw = Hashing { inner: w, hash: Sha256::new() };
        write_labeling(&mut hw, win, sch, lab)?;
        digest = hex(&hw.hash.finalize());
        Ok(())
    })?;
    Ok(digest)
}

/// SHA-256 of the snapshot bytes without touching the disk.
pub fn labeling_digest(win: &CayleyWindow, sch: &ScaledSchedule, lab: &Labeling) -> String {
    let mut hw = Hashing { inner: io::sink(), hash: Sha256::new() };
    write_labeling(&mut hw, win, sch, lab).expect("sink never fails");
    hex(&hw.hash.finalize())
}

/// Snapshot contents after loading.
pub struct Loaded {
    pub win: CayleyWindow,
    pub sch: ScaledSchedule,
    pub lab: Labeling,
}

#[derive(Default)]
struct Raw {
    format: Option<String>,
    group: Option<Value>,
    schedule: Option<Value>,
    radius: Option<u64>,
    level: Option<usize>,
    core: Option<u64>,
    stage: Option<usize>,
    strict: Option<bool>,
    c_depth: Option<u32>,
    depth: Option<usize>,
    words: Vec<i64>,
    word_ends: Vec<usize>,
    c: Vec<u64>,
    labels: Vec<u32>,
}

#[derive(Deserialize)]
struct ElementRec {
    word: Vec<i64>,
    c_prefix: String,
    f_labels: Vec<u32>,
}

struct Elements<'a>(&'a mut Raw);

impl<'de> DeserializeSeed<'de> for Elements<'_> {
    type Value = ();
    fn deserialize<D: de::Deserializer<'de>>(self, d: D) -> std::result::Result<(), D::Error> {
        d.deserialize_seq(self)
    }
}

impl<'de> Visitor<'de> for Elements<'_> {
    type Value = ();
    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("element records")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<(), A::Error> {
        while let Some(rec) = seq.next_element::<ElementRec>()? {
            let raw = &mut *self.0;
            raw.words.extend(&rec.word);
            raw.word_ends.push(raw.words.len());
            let mut c = 0u64;
            for (k, ch) in rec.c_prefix.chars().enumerate() {
                match ch {
                    '1' if k < 64 => c |= 1 << k,
                    '0' => {}
                    _ => return Err(de::Error::custom("bad c_prefix")),
                }
            }
            raw.c.push(c);
            raw.labels.extend(&rec.f_labels);
            if raw.depth.is_some_and(|d| d != rec.f_labels.len()) {
                return Err(de::Error::custom("label depth differs from the header"));
            }
        }
        Ok(())
    }
}

struct Top<'a>(&'a mut Raw);

impl<'de> Visitor<'de> for Top<'_> {
    type Value = ();
    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a labeling snapshot")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<(), A::Error> {
        let raw = self.0;
        while let Some(key) = map.next_key::<String>()? {
            match key.as_str() {
                "format" => raw.format = Some(map.next_value()?),
                "group" => raw.group = Some(map.next_value()?),
                "schedule" => raw.schedule = Some(map.next_value()?),
                "R" => raw.radius = Some(map.next_value()?),
                "level" => raw.level = Some(map.next_value()?),
                "core" => raw.core = Some(map.next_value()?),
                "stage" => raw.stage = Some(map.next_value()?),
                "strict" => raw.strict = Some(map.next_value()?),
                "c_depth" => raw.c_depth = Some(map.next_value()?),
                "depth" => raw.depth = Some(map.next_value()?),
                "elements" => map.next_value_seed(Elements(&mut *raw))?,
                _ => {
                    map.next_value::<de::IgnoredAny>()?;
                }
            }
        }
        Ok(())
    }
}

fn parse(path: &Path) -> Result<Raw> {
    let f = File::open(path).map_err(io_err)?;
    let mut raw = Raw::default();
    let mut de = serde_json::Deserializer::from_reader(BufReader::new(f));
    de::Deserializer::deserialize_map(&mut de, Top(&mut raw)).map_err(|e| ForgeError::Snapshot(e.to_string()))?;
    de.end().map_err(|e| ForgeError::Snapshot(e.to_string()))?;
    if raw.format.as_deref() != Some(FORMAT) {
        return Err(ForgeError::Snapshot(format!("unknown format {:?}", raw.format)));
    }
    Ok(raw)
}

fn miss(w: &str) -> ForgeError {
    ForgeError::Snapshot(format!("missing field `{w}`"))
}

fn assemble(raw: Raw, win: &CayleyWindow) -> Result<Labeling> {
    let depth = raw.depth.ok_or_else(|| miss("depth"))?;
    if raw.c.len() != win.len() {
        return Err(ForgeError::Snapshot(format!("{} elements, window has {}", raw.c.len(), win.len())));
    }
    let mut start = 0;
    for (i, &end) in raw.word_ends.iter().enumerate() {
        if win.encode(i as u32) != raw.words[start..end] {
            return Err(ForgeError::Snapshot(format!("element {i} is out of order")));
        }
        start = end;
    }
    let n = win.len();
    let layers = (0..depth).map(|m| (0..n).map(|i| raw.labels[i * depth + m]).collect()).collect();
    Ok(Labeling {
        c_depth: raw.c_depth.ok_or_else(|| miss("c_depth"))?,
        c: raw.c,
        layers,
        stage: raw.stage.ok_or_else(|| miss("stage"))?,
        core: raw.core.ok_or_else(|| miss("core"))?,
        strict: raw.strict.ok_or_else(|| miss("strict"))?,
    })
}

/// Loads a labeling snapshot and rebuilds its window; every element record
/// must match the window's shortlex order.
pub fn load_labeling(path: &Path) -> Result<Loaded> {
    let mut raw = parse(path)?;
    let gs = GeneratorSystem::from_json(&raw.group.take().ok_or_else(|| miss("group"))?.to_string())?;
    let sch = ScaledSchedule::from_json(&raw.schedule.take().ok_or_else(|| miss("schedule"))?)?;
    let radius = raw.radius.ok_or_else(|| miss("R"))?;
    let level = raw.level.ok_or_else(|| miss("level"))?;
    let win = CayleyWindow::new(&gs, radius, level)?;
    let lab = assemble(raw, &win)?;
    Ok(Loaded { win, sch, lab })
}

/// Loads a snapshot that must belong to `win` and `sch`.
pub fn load_labeling_in(path: &Path, win: &CayleyWindow, sch: &ScaledSchedule) -> Result<Labeling> {
    let mut raw = parse(path)?;
    let gs = GeneratorSystem::from_json(&raw.group.take().ok_or_else(|| miss("group"))?.to_string())?;
    let other = ScaledSchedule::from_json(&raw.schedule.take().ok_or_else(|| miss("schedule"))?)?;
    if gs != win.gs || raw.radius != Some(win.radius) || raw.level != Some(win.level) || other != *sch {
        return Err(ForgeError::Snapshot(format!("{} belongs to a different run", path.display())));
    }
    assemble(raw, win)
}

/// Rebuilds a ball from [`LabeledBall::to_json`]; the window supplies the
/// geometry, which translation makes the same around every center.
pub fn ball_from_json(win: &CayleyWindow, v: &Value) -> Result<LabeledBall> {
    let bad = |w: &str| ForgeError::Snapshot(format!("ball field `{w}`"));
    let j = v["j"].as_u64().ok_or_else(|| bad("j"))? as usize;
    let level = v["level"].as_u64().ok_or_else(|| bad("level"))? as usize;
    let t = v["t"].as_u64().ok_or_else(|| bad("t"))?;
    let center_word: Vec<i64> = serde_json::from_value(v["center"].clone()).map_err(|_| bad("center"))?;
    let verts = v["vertices"].as_array().ok_or_else(|| bad("vertices"))?;
    let mut bfs = Bfs::new(win.len());
    let order = bfs.run(win, &[0], t, level).to_vec();
    if order.len() != verts.len() || win.dist_e(0) + t > win.radius {
        return Err(ForgeError::Snapshot("ball does not fit the window".into()));
    }
    let slots = win.degree_slots(level);
    let local: rustc_hash::FxHashMap<u32, u32> = order.iter().enumerate().map(|(i, &x)| (x, i as u32)).collect();
    let mut adj = Vec::with_capacity(order.len() * slots);
    let mut c = Vec::with_capacity(order.len());
    let mut labels = Vec::with_capacity(order.len() * j);
    for (i, &o) in order.iter().enumerate() {
        let vert = &verts[i];
        let off: Vec<i64> = serde_json::from_value(vert["offset"].clone()).map_err(|_| bad("offset"))?;
        if off != win.encode(o) {
            return Err(ForgeError::Snapshot(format!("vertex {i} is out of order")));
        }
        win.for_slots(o, level, |y| adj.push(if y == NONE { NONE } else { local.get(&y).copied().unwrap_or(NONE) }));
        c.push(vert["c"].as_u64().ok_or_else(|| bad("c"))?);
        let l: Vec<u32> = serde_json::from_value(vert["labels"].clone()).map_err(|_| bad("labels"))?;
        if l.len() != j {
            return Err(bad("labels"));
        }
        labels.extend(l);
    }
    let dist = order.iter().map(|&x| bfs.dist(x).unwrap()).collect();
    let center = win.gs.backend.decode(&center_word).ok().and_then(|e| win.index_of(&e)).unwrap_or(NONE);
    Ok(LabeledBall { j, level, t, c, labels, dist, adj, slots, center, center_word })
}

pub fn codeball_from_json(win: &CayleyWindow, v: &Value) -> Result<Codeball> {
    let bad = |w: &str| ForgeError::Snapshot(format!("codeball field `{w}`"));
    let index = |w: &Value, what: &str| -> Result<u32> {
        let raw: Vec<i64> = serde_json::from_value(w.clone()).map_err(|_| bad(what))?;
        let e = win.gs.backend.decode(&raw)?;
        win.index_of(&e).ok_or(ForgeError::ElementOutsideWindow)
    };
    let mut directory = Vec::new();
    for d in v["directory"].as_array().ok_or_else(|| bad("directory"))? {
        let th = d["type"].as_str().and_then(|s| u64::from_str_radix(s, 16).ok()).ok_or_else(|| bad("type"))?;
        directory.push(DirEntry {
            type_hash: th,
            site: index(&d["site"], "site")?,
            local: d["local"].as_u64().ok_or_else(|| bad("local"))? as u32,
        });
    }
    Ok(Codeball {
        stage: v["stage"].as_u64().ok_or_else(|| bad("stage"))? as usize,
        z: index(&v["z"], "z")?,
        ball: ball_from_json(win, &v["pattern"])?,
        directory,
    })
}

/// Pretty JSON written atomically.
pub fn save_json(path: &Path, v: &Value) -> Result<String> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| ForgeError::Snapshot(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, |w| w.write_all(&bytes))?;
    Ok(sha256_hex(&bytes))
}

pub fn load_json(path: &Path) -> Result<Value> {
    let f = File::open(path).map_err(io_err)?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| ForgeError::Snapshot(e.to_string()))
}

pub fn save_text(path: &Path, text: &str) -> Result<String> {
    write_atomic(path, |w| w.write_all(text.as_bytes()))?;
    Ok(sha256_hex(text.as_bytes()))
}
