//! Binary field snapshots and the on-disk Stokes-basis cache.
//!
//! # Snapshot format
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "NSRSNAP1"
//! 8       4     u32 L: byte length of the header
//! 12      L     UTF-8 JSON header (see below)
//! 12+L    ...   f64 samples of every component, in header order; each
//!               component is row-major with the x index running fastest
//! ```
//!
//! The header is
//!
//! ```json
//! {"kind": "velocity" | "scalar", "domain": "square" | "torus",
//!  "nx": n, "ny": n, "h": h, "t": t,
//!  "components": [{"name": "u", "location": "x_face", "nx": .., "ny": ..}, ..]}
//! ```
//!
//! with `nx`, `ny` of the header counting cells. Velocity snapshots hold the
//! components `u` (`x_face`) and `v` (`y_face`), followed on the square by
//! `trace_bottom`, `trace_right`, `trace_top`, `trace_left` (`wall`, `n + 1`
//! samples each) when the field carries a wall trace. Scalar snapshots hold
//! one component `p` at `center` or `node`.
//!
//! # Basis cache format
//!
//! ```text
//! magic "NSRBASIS" | u32 L | JSON {"domain", "n", "m", "version"} |
//! m eigenvalues (f64) | for each mode: u samples then v samples (f64)
//! ```
//!
//! Files are named `basis-<domain>-n<n>-m<m>.bin`, written through a
//! temporary file and renamed into place.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Location, ScalarField, VectorField, WallTrace};
use crate::grid::{DomainKind, Grid};
use crate::stokes::{compute_eigenbasis, EigenOptions, StokesBasis};

const SNAPSHOT_MAGIC: &[u8; 8] = b"NSRSNAP1";
const BASIS_MAGIC: &[u8; 8] = b"NSRBASIS";
const BASIS_VERSION: u32 = 1;
/// Largest orthonormality defect accepted from a cache file.
pub const CACHE_ORTHONORMALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentLayout {
    pub name: String,
    pub location: String,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub kind: String,
    pub domain: DomainKind,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub t: f64,
    pub components: Vec<ComponentLayout>,
}

/// Contents of a snapshot file.
#[derive(Debug, Clone)]
pub enum Snapshot {
    Velocity { t: f64, field: VectorField },
    Scalar { t: f64, field: ScalarField },
}

fn layout(name: &str, location: &str, shape: (usize, usize)) -> ComponentLayout {
    ComponentLayout {
        name: name.into(),
        location: location.into(),
        nx: shape.0,
        ny: shape.1,
    }
}

fn write_framed(
    out: &mut impl Write,
    magic: &[u8; 8],
    header: &impl Serialize,
    blocks: &[&[f64]],
) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(magic)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for block in blocks {
        let mut bytes = Vec::with_capacity(block.len() * 8);
        for x in *block {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&bytes)?;
    }
    Ok(())
}

/// Reader over a framed file: magic, header, then f64 blocks.
struct Framed {
    bytes: Vec<u8>,
    pos: usize,
}

impl Framed {
    fn open(mut input: impl Read, magic: &[u8; 8]) -> Result<(Framed, Vec<u8>)> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[..8] != magic {
            return Err(Error::Format("bad magic".into()));
        }
        let len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        if bytes.len() < 12 + len {
            return Err(Error::Format("truncated header".into()));
        }
        let header = bytes[12..12 + len].to_vec();
        Ok((
            Framed {
                bytes,
                pos: 12 + len,
            },
            header,
        ))
    }

    fn take(&mut self, count: usize) -> Result<Vec<f64>> {
        let end = self.pos + 8 * count;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated sample block".into()));
        }
        let out = self.bytes[self.pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        self.pos = end;
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

/// Serialize a velocity field at time `t`.
pub fn write_velocity(out: &mut impl Write, field: &VectorField, t: f64) -> Result<()> {
    let g = field.grid();
    let mut components = vec![
        layout("u", "x_face", g.u_shape()),
        layout("v", "y_face", g.v_shape()),
    ];
    let mut blocks: Vec<&[f64]> = vec![field.u(), field.v()];
    if let Some(tr) = field.trace() {
        for (name, w) in ["trace_bottom", "trace_right", "trace_top", "trace_left"]
            .iter()
            .zip(tr.walls())
        {
            components.push(layout(name, "wall", (w.len(), 1)));
            blocks.push(w);
        }
    }
    let header = SnapshotHeader {
        kind: "velocity".into(),
        domain: g.kind(),
        nx: g.n(),
        ny: g.n(),
        h: g.h(),
        t,
        components,
    };
    write_framed(out, SNAPSHOT_MAGIC, &header, &blocks)
}

/// Serialize a scalar field at time `t`.
pub fn write_scalar(out: &mut impl Write, field: &ScalarField, t: f64) -> Result<()> {
    let g = field.grid();
    let (location, shape) = match field.location() {
        Location::Center => ("center", (g.n(), g.n())),
        Location::Node => {
            let k = g.nodes_per_side();
            ("node", (k, k))
        }
    };
    let header = SnapshotHeader {
        kind: "scalar".into(),
        domain: g.kind(),
        nx: g.n(),
        ny: g.n(),
        h: g.h(),
        t,
        components: vec![layout("p", location, shape)],
    };
    write_framed(out, SNAPSHOT_MAGIC, &header, &[field.values()])
}

/// Parse a snapshot; the grid is rebuilt from the header.
pub fn read_snapshot(input: impl Read) -> Result<Snapshot> {
    let (mut frame, raw) = Framed::open(input, SNAPSHOT_MAGIC)?;
    let header: SnapshotHeader =
        serde_json::from_slice(&raw).map_err(|e| Error::Format(e.to_string()))?;
    if header.nx != header.ny {
        return Err(Error::Format("only square grids are supported".into()));
    }
    let grid = Grid::new(header.domain, header.nx)?;
    let mut blocks = Vec::with_capacity(header.components.len());
    for c in &header.components {
        blocks.push((c, frame.take(c.nx * c.ny)?));
    }
    frame.finish()?;
    let snap = match header.kind.as_str() {
        "velocity" => {
            let names: Vec<&str> = header.components.iter().map(|c| c.name.as_str()).collect();
            let trace = match names.as_slice() {
                ["u", "v"] => None,
                ["u", "v", "trace_bottom", "trace_right", "trace_top", "trace_left"] => {
                    Some(WallTrace {
                        bottom: blocks[2].1.clone(),
                        right: blocks[3].1.clone(),
                        top: blocks[4].1.clone(),
                        left: blocks[5].1.clone(),
                    })
                }
                _ => {
                    return Err(Error::Format(format!(
                        "unexpected velocity components {names:?}"
                    )))
                }
            };
            let mut it = blocks.into_iter();
            let u = it.next().map(|b| b.1).unwrap_or_default();
            let v = it.next().map(|b| b.1).unwrap_or_default();
            let field = VectorField::from_components(&grid, u, v)
                .map_err(|e| Error::Format(e.to_string()))?
                .with_trace(trace);
            Snapshot::Velocity { t: header.t, field }
        }
        "scalar" => {
            let (c, values) = blocks
                .into_iter()
                .next()
                .ok_or_else(|| Error::Format("scalar snapshot without samples".into()))?;
            let location = match c.location.as_str() {
                "center" => Location::Center,
                "node" => Location::Node,
                other => return Err(Error::Format(format!("unknown scalar location {other}"))),
            };
            let field = ScalarField::from_values(&grid, location, values)
                .map_err(|e| Error::Format(e.to_string()))?;
            Snapshot::Scalar { t: header.t, field }
        }
        other => return Err(Error::Format(format!("unknown snapshot kind {other}"))),
    };
    Ok(snap)
}

/// Write `bytes` to `path` atomically (temporary file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write a velocity snapshot file.
pub fn save_velocity(path: &Path, field: &VectorField, t: f64) -> Result<()> {
    let mut buf = Vec::new();
    write_velocity(&mut buf, field, t)?;
    write_atomic(path, &buf)
}

/// Write a scalar snapshot file.
pub fn save_scalar(path: &Path, field: &ScalarField, t: f64) -> Result<()> {
    let mut buf = Vec::new();
    write_scalar(&mut buf, field, t)?;
    write_atomic(path, &buf)
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    read_snapshot(fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BasisHeader {
    domain: DomainKind,
    n: usize,
    m: usize,
    version: u32,
}

/// How [`BasisCache::load_or_compute`] obtained the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    /// Loaded from disk and verified.
    Hit,
    /// No cache file: computed and stored.
    Built,
    /// Cache file unreadable or failed verification: recomputed and stored.
    Rebuilt,
    /// Rebuild requested by the caller.
    Forced,
}

/// Directory of cached Stokes bases keyed by `(domain, n, m)`.
#[derive(Debug, Clone)]
pub struct BasisCache {
    dir: PathBuf,
}

/// Cache key `basis-<domain>-n<n>-m<m>`.
pub fn cache_key(kind: DomainKind, n: usize, m: usize) -> String {
    format!("basis-{}-n{n}-m{m}", kind.as_str())
}

impl BasisCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BasisCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, kind: DomainKind, n: usize, m: usize) -> PathBuf {
        self.dir.join(format!("{}.bin", cache_key(kind, n, m)))
    }

    /// Store `basis` under its key.
    pub fn store(&self, basis: &StokesBasis) -> Result<PathBuf> {
        let g = basis.grid();
        let header = BasisHeader {
            domain: g.kind(),
            n: g.n(),
            m: basis.len(),
            version: BASIS_VERSION,
        };
        let mut blocks: Vec<&[f64]> = vec![basis.eigenvalues()];
        for w in basis.modes() {
            blocks.push(w.u());
            blocks.push(w.v());
        }
        let mut buf = Vec::new();
        write_framed(&mut buf, BASIS_MAGIC, &header, &blocks)?;
        let path = self.path(g.kind(), g.n(), basis.len());
        write_atomic(&path, &buf)?;
        Ok(path)
    }

    /// Read the cached basis for `(grid, m)`. `Ok(None)` when there is no
    /// file; a file that is malformed, belongs to another key or fails the
    /// orthonormality check is an error.
    pub fn load(&self, grid: &Arc<Grid>, m: usize) -> Result<Option<StokesBasis>> {
        let path = self.path(grid.kind(), grid.n(), m);
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let (mut frame, raw) = Framed::open(file, BASIS_MAGIC)?;
        let header: BasisHeader =
            serde_json::from_slice(&raw).map_err(|e| Error::Format(e.to_string()))?;
        if header.domain != grid.kind()
            || header.n != grid.n()
            || header.m != m
            || header.version != BASIS_VERSION
        {
            return Err(Error::Format(format!(
                "cache header {header:?} does not match the requested key"
            )));
        }
        let eigenvalues = frame.take(m)?;
        let mut modes = Vec::with_capacity(m);
        for _ in 0..m {
            let u = frame.take(grid.u_len())?;
            let v = frame.take(grid.v_len())?;
            modes.push(VectorField::from_components(grid, u, v)?);
        }
        frame.finish()?;
        let basis = StokesBasis::from_parts(grid, eigenvalues, modes)?;
        let err = basis.orthonormality_error();
        if !(err <= CACHE_ORTHONORMALITY_TOL) {
            return Err(Error::Format(format!(
                "cached basis orthonormality error {err:.3e}"
            )));
        }
        Ok(Some(basis))
    }

    /// Cached basis if present and valid, otherwise compute and store it.
    pub fn load_or_compute(
        &self,
        grid: &Arc<Grid>,
        m: usize,
        opts: &EigenOptions,
        force_rebuild: bool,
    ) -> Result<(StokesBasis, CacheStatus)> {
        let status = if force_rebuild {
            CacheStatus::Forced
        } else {
            match self.load(grid, m) {
                Ok(Some(b)) => return Ok((b, CacheStatus::Hit)),
                Ok(None) => CacheStatus::Built,
                Err(e) => {
                    log::warn!(
                        "discarding basis cache for {}: {e}",
                        cache_key(grid.kind(), grid.n(), m)
                    );
                    CacheStatus::Rebuilt
                }
            }
        };
        let basis = compute_eigenbasis(grid, m, opts)?;
        self.store(&basis)?;
        Ok((basis, status))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::{build_lift, BoundaryData};

    fn bits(a: &[f64]) -> Vec<u64> {
        a.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn velocity_round_trip_with_trace() {
        let g = Grid::square(28).unwrap();
        let lift = build_lift(&BoundaryData::bottom_bump(0.7), 0.3, &g).unwrap();
        let f = lift.g_eps().clone();
        assert!(f.trace().is_some());
        let mut buf = Vec::new();
        write_velocity(&mut buf, &f, 0.25).unwrap();
        match read_snapshot(buf.as_slice()).unwrap() {
            Snapshot::Velocity { t, field } => {
                assert_eq!(t, 0.25);
                assert_eq!(bits(field.u()), bits(f.u()));
                assert_eq!(bits(field.v()), bits(f.v()));
                assert_eq!(field.trace(), f.trace());
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn torus_velocity_and_scalar_round_trip() {
        let g = Grid::torus(16).unwrap();
        let f = VectorField::from_fn(&g, |x, y| (x.sin() * y.cos(), -x.cos() * y.sin()));
        let mut buf = Vec::new();
        write_velocity(&mut buf, &f, 1.0).unwrap();
        let Snapshot::Velocity { field, .. } = read_snapshot(buf.as_slice()).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(bits(field.u()), bits(f.u()));
        assert!(field.trace().is_none());
        for loc in [Location::Center, Location::Node] {
            let p = ScalarField::from_fn(&g, loc, |x, y| x - 2.0 * y);
            let mut buf = Vec::new();
            write_scalar(&mut buf, &p, -0.5).unwrap();
            let Snapshot::Scalar { t, field } = read_snapshot(buf.as_slice()).unwrap() else {
                panic!("wrong kind")
            };
            assert_eq!(t, -0.5);
            assert_eq!(field.location(), loc);
            assert_eq!(bits(field.values()), bits(p.values()));
        }
    }

    #[test]
    fn header_is_documented_json() {
        let g = Grid::square(28).unwrap();
        let mut buf = Vec::new();
        write_velocity(&mut buf, &VectorField::zeros(&g), 0.0).unwrap();
        assert_eq!(&buf[..8], SNAPSHOT_MAGIC);
        let len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let h: serde_json::Value = serde_json::from_slice(&buf[12..12 + len]).unwrap();
        assert_eq!(h["kind"], "velocity");
        assert_eq!(h["nx"], 28);
        assert_eq!(h["components"][0]["location"], "x_face");
        assert_eq!(buf.len(), 12 + len + 8 * (g.u_len() + g.v_len()));
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let g = Grid::torus(8).unwrap();
        let mut buf = Vec::new();
        write_velocity(&mut buf, &VectorField::zeros(&g), 0.0).unwrap();
        assert!(read_snapshot(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_snapshot(extra.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_snapshot(bad.as_slice()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::torus(8).unwrap();
        let f = VectorField::from_fn(&g, |x, _| (x.cos(), 0.0));
        let path = dir.path().join("sub").join("v.snap");
        save_velocity(&path, &f, 2.0).unwrap();
        let Snapshot::Velocity { field, t } = load_snapshot(&path).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(t, 2.0);
        assert_eq!(bits(field.u()), bits(f.u()));
        let leftovers: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn basis_cache_hits_and_rebuilds() {
        let dir = tempfile::tempdir().unwrap();
        let cache = BasisCache::new(dir.path());
        let g = Grid::square(16).unwrap();
        let opts = EigenOptions::default();
        let (b1, s1) = cache.load_or_compute(&g, 6, &opts, false).unwrap();
        assert_eq!(s1, CacheStatus::Built);
        let (b2, s2) = cache.load_or_compute(&g, 6, &opts, false).unwrap();
        assert_eq!(s2, CacheStatus::Hit);
        assert_eq!(bits(b1.eigenvalues()), bits(b2.eigenvalues()));
        assert_eq!(bits(b1.mode(3).u()), bits(b2.mode(3).u()));
        let (_, s3) = cache.load_or_compute(&g, 6, &opts, true).unwrap();
        assert_eq!(s3, CacheStatus::Forced);

        // corrupt one mode sample: orthonormality check fails, basis rebuilt
        let path = cache.path(DomainKind::Square, 16, 6);
        let mut bytes = fs::read(&path).unwrap();
        let k = bytes.len() - 8 * 40;
        bytes[k..k + 8].copy_from_slice(&1.0f64.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(cache.load(&g, 6).is_err());
        let (b4, s4) = cache.load_or_compute(&g, 6, &opts, false).unwrap();
        assert_eq!(s4, CacheStatus::Rebuilt);
        assert!(b4.orthonormality_error() < 1e-10);
        assert_eq!(
            cache.load_or_compute(&g, 6, &opts, false).unwrap().1,
            CacheStatus::Hit
        );

        // another key is a miss, not a mismatch
        assert!(cache.load(&g, 5).unwrap().is_none());
        assert_eq!(cache_key(DomainKind::Torus, 64, 8), "basis-torus-n64-m8");
    }
}
