//! Line-oriented text format for taxonomies and profile sets.
//!
//! ```text
//! taxonomy <n>
//! <id> <parent-id | -> <name>        (n lines, ids 0..n-1 in order)
//!
//! profiles <m>
//! <peer-id> <label>:<weight> ...     (m lines, labels ascending)
//! ```
//!
//! Weights are written with Rust's shortest round-trip float formatting, so
//! reading a file back reproduces every weight exactly. Blank lines and lines
//! starting with `#` are ignored.

use std::io::{BufRead, Write};

use super::{Profile, Taxonomy, TaxonomyNode};
use crate::error::{Error, Result};
use crate::ids::{LabelId, PeerId};

pub fn write_taxonomy<W: Write>(taxonomy: &Taxonomy, mut out: W) -> Result<()> {
    writeln!(out, "taxonomy {}", taxonomy.len())?;
    for n in taxonomy.nodes() {
        match n.parent {
            Some(p) => writeln!(out, "{} {} {}", n.id, p, n.name)?,
            None => writeln!(out, "{} - {}", n.id, n.name)?,
        }
    }
    Ok(())
}

pub fn write_profiles<W: Write>(profiles: &[(PeerId, Profile)], mut out: W) -> Result<()> {
    writeln!(out, "profiles {}", profiles.len())?;
    for (id, p) in profiles {
        write!(out, "{id}")?;
        for (l, w) in p.weights() {
            write!(out, " {l}:{w}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn content_lines<R: BufRead>(input: R) -> impl Iterator<Item = Result<(usize, String)>> {
    input.lines().enumerate().filter_map(|(i, l)| match l {
        Err(e) => Some(Err(e.into())),
        Ok(l) => {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#')).then(|| Ok((i + 1, t.to_string())))
        }
    })
}

fn header(line: Option<Result<(usize, String)>>, keyword: &str) -> Result<(usize, usize)> {
    let (no, text) = line.ok_or_else(|| Error::parse(0, format!("missing `{keyword}` header")))??;
    let mut parts = text.split_whitespace();
    if parts.next() != Some(keyword) {
        return Err(Error::parse(no, format!("expected `{keyword} <count>`")));
    }
    let count = parts
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::parse(no, "bad count"))?;
    if parts.next().is_some() {
        return Err(Error::parse(no, "trailing tokens in header"));
    }
    Ok((no, count))
}

pub fn read_taxonomy<R: BufRead>(input: R) -> Result<Taxonomy> {
    let mut lines = content_lines(input);
    let (hdr, n) = header(lines.next(), "taxonomy")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, text) = lines
            .next()
            .ok_or_else(|| Error::parse(hdr, format!("expected {n} taxonomy lines")))??;
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::parse(no, "expected `<id> <parent|-> <name>`"));
        }
        let id: LabelId = parts[0].parse().map_err(|_| Error::parse(no, "bad label id"))?;
        let parent = match parts[1] {
            "-" => None,
            p => Some(p.parse().map_err(|_| Error::parse(no, "bad parent id"))?),
        };
        nodes.push(TaxonomyNode { id, parent, name: parts[2].to_string() });
    }
    if let Some(extra) = lines.next() {
        let (no, _) = extra?;
        return Err(Error::parse(no, "unexpected content after taxonomy"));
    }
    Taxonomy::from_nodes(nodes)
}

pub fn read_profiles<R: BufRead>(input: R) -> Result<Vec<(PeerId, Profile)>> {
    let mut lines = content_lines(input);
    let (hdr, n) = header(lines.next(), "profiles")?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, text) = lines
            .next()
            .ok_or_else(|| Error::parse(hdr, format!("expected {n} profile lines")))??;
        let mut parts = text.split_whitespace();
        let id: u64 = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::parse(no, "bad peer id"))?;
        let mut weights = Vec::new();
        for tok in parts {
            let (l, w) = tok.split_once(':').ok_or_else(|| Error::parse(no, "expected label:weight"))?;
            let l: LabelId = l.parse().map_err(|_| Error::parse(no, "bad label"))?;
            let w: f64 = w.parse().map_err(|_| Error::parse(no, "bad weight"))?;
            weights.push((l, w));
        }
        let profile = Profile::new(weights).map_err(|e| Error::parse(no, e.to_string()))?;
        out.push((PeerId(id), profile));
    }
    if let Some(extra) = lines.next() {
        let (no, _) = extra?;
        return Err(Error::parse(no, "unexpected content after profiles"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{assign_profiles, ZipfAssignment};

    #[test]
    fn taxonomy_and_profiles_round_trip() {
        let t = Taxonomy::generate(7, 200, (2, 5)).unwrap();
        let mut buf = Vec::new();
        write_taxonomy(&t, &mut buf).unwrap();
        assert!(buf.starts_with(b"taxonomy 200\n0 - r\n"));
        let back = read_taxonomy(&buf[..]).unwrap();
        assert_eq!(back, t);

        let z = ZipfAssignment::over_leaves(&t, 1.0, 7).unwrap();
        let ps: Vec<_> = assign_profiles(50, &t, &z, 3, 0.5, 1)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, p)| (PeerId(i as u64), p))
            .collect();
        let mut buf = Vec::new();
        write_profiles(&ps, &mut buf).unwrap();
        let back = read_profiles(&buf[..]).unwrap();
        assert_eq!(back.len(), ps.len());
        for ((a, p), (b, q)) in ps.iter().zip(&back) {
            assert_eq!(a, b);
            for ((l1, w1), (l2, w2)) in p.weights().iter().zip(q.weights()) {
                assert_eq!(l1, l2);
                assert!((w1 - w2).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_taxonomy(&b"taxonomy 2\n0 - r\n"[..]).is_err());
        assert!(read_taxonomy(&b"taxo 1\n0 - r\n"[..]).is_err());
        assert!(read_taxonomy(&b"taxonomy 1\n0 x r\n"[..]).is_err());
        assert!(read_profiles(&b"profiles 1\n0 1:0\n"[..]).is_err());
        assert!(read_profiles(&b"profiles 1\n0 1-2\n"[..]).is_err());
        let ok = read_profiles(&b"# comment\nprofiles 1\n\n3 1:0.5 2:2\n"[..]).unwrap();
        assert_eq!(ok[0].0, PeerId(3));
    }
}
