//! Text cache of per-image person boxes.
//!
//! ```text
//! advtex-boxes v1
//! detector toy
//! images 2
//! img_001 1 0.5 0.5 0.2 0.6 0.93
//! img_002 0
//! ```
//!
//! Each record is the image id followed by the box count and then
//! `cx cy w h conf` per box. Ids are percent-escaped so they never contain
//! whitespace.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::bbox::{BBox, Detection};
use crate::error::{Error, Result};

const HEADER: &str = "advtex-boxes v1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoxCache {
    pub detector: String,
    entries: BTreeMap<String, Vec<Detection>>,
}

fn escape(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for ch in id.chars() {
        match ch {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('%') {
        out.push_str(&rest[..i]);
        let code = rest.get(i + 1..i + 3)?;
        out.push(u8::from_str_radix(code, 16).ok()? as char);
        rest = &rest[i + 3..];
    }
    out.push_str(rest);
    Some(out)
}

impl BoxCache {
    pub fn new(detector: impl Into<String>) -> Self {
        Self {
            detector: detector.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: String, boxes: Vec<Detection>) {
        self.entries.insert(id, boxes);
    }

    pub fn get(&self, id: &str) -> Option<&[Detection]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Detection])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn total_boxes(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{HEADER}").unwrap();
        writeln!(s, "detector {}", escape(&self.detector)).unwrap();
        writeln!(s, "images {}", self.entries.len()).unwrap();
        for (id, boxes) in &self.entries {
            write!(s, "{} {}", escape(id), boxes.len()).unwrap();
            for d in boxes {
                let b = d.bbox;
                write!(s, " {} {} {} {} {}", b.cx, b.cy, b.w, b.h, d.confidence).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: usize, d: &str| Error::format("box cache", origin, format!("line {line}: {d}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(bad(1, "missing or unsupported header")),
        }
        let (n, line) = lines.next().ok_or_else(|| bad(2, "missing detector line"))?;
        let detector = line
            .strip_prefix("detector ")
            .and_then(unescape)
            .ok_or_else(|| bad(n, "expected `detector <name>`"))?;
        let (n, line) = lines.next().ok_or_else(|| bad(3, "missing image count"))?;
        let count: usize = line
            .strip_prefix("images ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(n, "expected `images <count>`"))?;
        let mut cache = BoxCache::new(detector);
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let id = fields.next().and_then(unescape).ok_or_else(|| bad(n, "bad image id"))?;
            let k: usize = fields
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(n, "bad box count"))?;
            let vals = fields
                .map(|v| v.parse::<f64>().map_err(|e| bad(n, &e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 5 * k {
                return Err(bad(n, &format!("expected {} numbers, found {}", 5 * k, vals.len())));
            }
            let boxes = vals
                .chunks_exact(5)
                .map(|c| {
                    let d = Detection::person(BBox::new(c[0], c[1], c[2], c[3]), c[4]);
                    d.validate().map(|_| d).map_err(|e| bad(n, &e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?;
            if cache.entries.insert(id.clone(), boxes).is_some() {
                return Err(bad(n, &format!("duplicate image id {id:?}")));
            }
        }
        if cache.len() != count {
            return Err(bad(
                3,
                &format!("header announces {count} images, found {}", cache.len()),
            ));
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
