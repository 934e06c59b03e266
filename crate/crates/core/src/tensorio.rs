//! `.lpce` embedding stores and view-group directories.
//!
//! A store is a fixed 24-byte header followed by a dense little-endian f32
//! payload:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LPCE"
//! 4       2     version (u16 LE, currently 1)
//! 6       1     dtype code (1 = f32 LE)
//! 7       1     flags (bit 0: every row is unit-norm)
//! 8       8     N rows (u64 LE)
//! 16      8     D columns (u64 LE)
//! 24      4·N·D payload, row-major
//! ```
//!
//! Metadata lives in a JSON sidecar `<basename>.manifest.json` next to the
//! store so that payloads stay fixed-stride.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: [u8; 4] = *b"LPCE";
pub const VERSION: u16 = 1;
pub const DTYPE_F32_LE: u8 = 1;
pub const FLAG_UNIT_NORM: u8 = 1;
pub const HEADER_LEN: usize = 24;
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

pub const WEAK_STORE: &str = "weak.lpce";
pub const GROUP_MANIFEST: &str = "group.manifest.json";

/// Shape recorded in a probe checkpoint manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ProbeShape {
    pub C: usize,
    pub D: usize,
    pub bias: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_group: Option<String>,
    #[serde(default)]
    pub source: String,
    /// Prompt banks: prompts per class; rows are ordered class-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_count: Option<usize>,
    /// Probe checkpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeShape>,
    /// View groups: number of strong views K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_views: Option<usize>,
}

impl Manifest {
    pub fn new(class_names: Vec<String>, source: impl Into<String>) -> Self {
        Manifest {
            class_names,
            source: source.into(),
            ..Default::default()
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Checks label range and length against a store with `rows` rows.
    pub fn check(&self, rows: usize) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != rows {
                return Err(Error::Manifest(format!(
                    "labels has length {}, store has {rows} rows",
                    labels.len()
                )));
            }
            let c = self.class_names.len() as i64;
            if let Some(bad) = labels.iter().find(|&&l| l < -1 || l >= c) {
                return Err(Error::Manifest(format!(
                    "label {bad} outside [-1, {}]",
                    c - 1
                )));
            }
        }
        Ok(())
    }
}

/// An N×D f32 payload with its header flags and manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    rows: usize,
    cols: usize,
    unit_norm: bool,
    data: Vec<f32>,
    pub manifest: Manifest,
}

impl EmbeddingStore {
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f32>,
        unit_norm: bool,
        manifest: Manifest,
    ) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} values cannot fill a {rows}x{cols} store",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinitePayload);
        }
        let store = EmbeddingStore {
            rows,
            cols,
            unit_norm,
            data,
            manifest,
        };
        store.check_norms()?;
        store.manifest.check(rows)?;
        Ok(store)
    }

    /// Narrows a matrix to f32.
    pub fn from_matrix(m: &Matrix, unit_norm: bool, manifest: Manifest) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinitePayload);
        }
        let data = m.as_slice().iter().map(|&v| v as f32).collect();
        Self::new(m.rows(), m.cols(), data, unit_norm, manifest)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.data.iter().map(|&v| f64::from(v)).collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("store shape is consistent")
    }

    /// Labels from the manifest, or an error naming what is missing.
    pub fn labels(&self) -> Option<&[i64]> {
        self.manifest.labels.as_deref()
    }

    fn check_norms(&self) -> Result<()> {
        if !self.unit_norm {
            return Ok(());
        }
        for i in 0..self.rows {
            let n = self
                .row(i)
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "unit-norm flag set but row {i} has norm {n}"
                )));
            }
        }
        Ok(())
    }

    fn header(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&MAGIC);
        h[4..6].copy_from_slice(&VERSION.to_le_bytes());
        h[6] = DTYPE_F32_LE;
        h[7] = if self.unit_norm { FLAG_UNIT_NORM } else { 0 };
        h[8..16].copy_from_slice(&(self.rows as u64).to_le_bytes());
        h[16..24].copy_from_slice(&(self.cols as u64).to_le_bytes());
        h
    }

    /// Header plus payload, exactly as written to disk.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&self.header());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// Sidecar path for a store: `dir/name.lpce` → `dir/name.manifest.json`.
pub fn manifest_path(store: &Path) -> PathBuf {
    let stem = store
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    store.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Writes the store and its sidecar manifest.
pub fn write_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&store.to_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    write_manifest(&manifest_path(path), &store.manifest)
}

/// Convenience wrapper: validates `matrix` and writes it.
pub fn write_matrix(
    matrix: &Matrix,
    unit_norm: bool,
    manifest: Manifest,
    path: &Path,
) -> Result<EmbeddingStore> {
    let store = EmbeddingStore::from_matrix(matrix, unit_norm, manifest)?;
    write_store(&store, path)?;
    Ok(store)
}

struct Header {
    unit_norm: bool,
    rows: usize,
    cols: usize,
}

fn parse_header(path: &Path, h: &[u8; HEADER_LEN]) -> Result<Header> {
    if h[0..4] != MAGIC {
        return Err(Error::NotAStore(path.to_path_buf()));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if h[6] != DTYPE_F32_LE {
        return Err(Error::UnsupportedDtype(h[6]));
    }
    let rows = u64::from_le_bytes(h[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(h[16..24].try_into().unwrap());
    Ok(Header {
        unit_norm: h[7] & FLAG_UNIT_NORM != 0,
        rows: usize::try_from(rows).map_err(|_| Error::OutOfRange(format!("N = {rows}")))?,
        cols: usize::try_from(cols).map_err(|_| Error::OutOfRange(format!("D = {cols}")))?,
    })
}

/// Reads a store. The header is validated against the file size before
/// any payload byte is read.
pub fn read_store(path: &Path) -> Result<EmbeddingStore> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut h = [0u8; HEADER_LEN];
    if file_len < HEADER_LEN as u64 {
        // Too short to even carry a header.
        let mut prefix = Vec::new();
        file.read_to_end(&mut prefix)
            .map_err(|e| Error::io(path, e))?;
        if prefix.len() < 4 || prefix[0..4] != MAGIC {
            return Err(Error::NotAStore(path.to_path_buf()));
        }
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN as u64,
            found: file_len,
        });
    }
    file.read_exact(&mut h).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &h)?;

    let payload = (header.rows as u64)
        .checked_mul(header.cols as u64)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::OutOfRange("N·D overflows".into()))?;
    let expected = HEADER_LEN as u64 + payload;
    if file_len < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: file_len,
        });
    }
    if file_len > expected {
        return Err(Error::InvalidArgument(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            file_len - expected
        )));
    }

    let mut bytes = vec![0u8; payload as usize];
    file.read_exact(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let manifest = read_manifest(&manifest_path(path))?;
    EmbeddingStore::new(header.rows, header.cols, data, header.unit_norm, manifest)
}

/// A weak store plus K strong stores over the same samples.
#[derive(Debug, Clone)]
pub struct ViewGroup {
    pub weak: EmbeddingStore,
    pub strong: Vec<EmbeddingStore>,
    pub manifest: Manifest,
}

impl ViewGroup {
    pub fn new(
        weak: EmbeddingStore,
        strong: Vec<EmbeddingStore>,
        manifest: Manifest,
    ) -> Result<Self> {
        for (k, s) in strong.iter().enumerate() {
            if s.rows() != weak.rows() || s.cols() != weak.cols() {
                return Err(Error::dims(format!(
                    "strong view {k} is {}x{}, weak view is {}x{}",
                    s.rows(),
                    s.cols(),
                    weak.rows(),
                    weak.cols()
                )));
            }
        }
        Ok(ViewGroup {
            weak,
            strong,
            manifest,
        })
    }

    pub fn len(&self) -> usize {
        self.weak.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.weak.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.weak.cols()
    }

    pub fn num_strong(&self) -> usize {
        self.strong.len()
    }

    /// Drops all but the first `k` strong views.
    pub fn truncate_views(&mut self, k: usize) {
        self.strong.truncate(k);
        self.manifest.strong_views = Some(self.strong.len());
    }
}

pub fn strong_store_name(k: usize) -> String {
    format!("strong_{k}.lpce")
}

pub fn write_view_group(group: &ViewGroup, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_store(&group.weak, &dir.join(WEAK_STORE))?;
    for (k, s) in group.strong.iter().enumerate() {
        write_store(s, &dir.join(strong_store_name(k)))?;
    }
    let mut manifest = group.manifest.clone();
    manifest.strong_views = Some(group.strong.len());
    write_manifest(&dir.join(GROUP_MANIFEST), &manifest)
}

pub fn read_view_group(dir: &Path) -> Result<ViewGroup> {
    let weak = read_store(&dir.join(WEAK_STORE))?;
    let mut strong = Vec::new();
    loop {
        let p = dir.join(strong_store_name(strong.len()));
        if !p.exists() {
            break;
        }
        strong.push(read_store(&p)?);
    }
    let gm = dir.join(GROUP_MANIFEST);
    let manifest = if gm.exists() {
        read_manifest(&gm)?
    } else {
        weak.manifest.clone()
    };
    manifest.check(weak.rows())?;
    ViewGroup::new(weak, strong, manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub unit_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub strong_views: usize,
    pub rows: usize,
    pub cols: usize,
    pub members: Vec<MemberInfo>,
    pub issues: Vec<String>,
}

/// Inspects a view-group directory. Inconsistencies are reported, not
/// raised; only the report itself is returned.
pub fn validate_view_group(dir: &Path) -> ValidationReport {
    let mut report = ValidationReport {
        valid: true,
        strong_views: 0,
        rows: 0,
        cols: 0,
        members: Vec::new(),
        issues: Vec::new(),
    };
    let weak_path = dir.join(WEAK_STORE);
    if !weak_path.exists() {
        report.valid = false;
        report.issues.push("missing weak store".into());
        return report;
    }

    let mut names = vec![WEAK_STORE.to_string()];
    while dir.join(strong_store_name(names.len() - 1)).exists() {
        names.push(strong_store_name(names.len() - 1));
    }
    report.strong_views = names.len() - 1;

    for name in names {
        match read_store(&dir.join(&name)) {
            Ok(s) => report.members.push(MemberInfo {
                name,
                rows: s.rows(),
                cols: s.cols(),
                unit_norm: s.is_unit_norm(),
            }),
            Err(e) => {
                report.valid = false;
                report.issues.push(format!("{name}: {e}"));
            }
        }
    }

    if let Some(first) = report.members.first() {
        report.rows = first.rows;
        report.cols = first.cols;
    }
    let (rows, cols) = (report.rows, report.cols);
    for m in &report.members {
        if m.cols != cols {
            report.valid = false;
            report.issues.push(format!(
                "dimension mismatch: {} has D={}, expected {cols}",
                m.name, m.cols
            ));
        }
        if m.rows != rows {
            report.valid = false;
            report.issues.push(format!(
                "sample count mismatch: {} has N={}, expected {rows}",
                m.name, m.rows
            ));
        }
    }
    let gm = dir.join(GROUP_MANIFEST);
    if gm.exists() {
        match read_manifest(&gm).and_then(|m| m.check(rows).map(|_| m)) {
            Ok(m) => {
                if let Some(k) = m.strong_views {
                    if k != report.strong_views {
                        report.valid = false;
                        report.issues.push(format!(
                            "group manifest declares {k} strong views, found {}",
                            report.strong_views
                        ));
                    }
                }
            }
            Err(e) => {
                report.valid = false;
                report.issues.push(format!("{GROUP_MANIFEST}: {e}"));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manifest(rows: usize) -> Manifest {
        Manifest {
            class_names: vec!["a".into(), "b".into()],
            labels: Some((0..rows as i64).map(|i| i % 2).collect()),
            view_group: Some("g".into()),
            source: "unit".into(),
            ..Default::default()
        }
    }

    fn store(rows: usize, cols: usize) -> EmbeddingStore {
        let data = (0..rows * cols).map(|i| i as f32 * 0.5 - 1.0).collect();
        EmbeddingStore::new(rows, cols, data, false, manifest(rows)).unwrap()
    }

    #[test]
    fn roundtrip_small_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lpce");
        let s = store(2, 3);
        write_store(&s, &path).unwrap();
        let back = read_store(&path).unwrap();
        assert_eq!(back, s);
        assert!(dir.path().join("m.manifest.json").exists());
        assert_eq!(fs::metadata(&path).unwrap().len(), 24 + 2 * 3 * 4);
    }

    #[test]
    fn rejects_nan() {
        let m = Matrix::from_rows(&[[1.0, f64::NAN]]).unwrap();
        let err = EmbeddingStore::from_matrix(&m, false, Manifest::default()).unwrap_err();
        assert_eq!(err.to_string(), "non-finite payload");
    }

    #[test]
    fn wrong_magic_is_not_a_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.lpce");
        let mut bytes = store(2, 2).to_bytes();
        bytes[0..4].copy_from_slice(b"NOPE");
        fs::write(&path, bytes).unwrap();
        let err = read_store(&path).unwrap_err();
        assert!(
            err.to_string().starts_with("not an embedding store"),
            "{err}"
        );
    }

    #[test]
    fn short_payload_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.lpce");
        let mut bytes = store(5, 10).to_bytes();
        bytes[8..16].copy_from_slice(&10u64.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 50 * 4);
        fs::write(&path, bytes).unwrap();
        write_manifest(&manifest_path(&path), &Manifest::default()).unwrap();
        let err = read_store(&path).unwrap_err();
        assert!(err.to_string().starts_with("truncated payload"), "{err}");
    }

    #[test]
    fn unknown_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.lpce");
        let mut bytes = store(1, 1).to_bytes();
        bytes[4..6].copy_from_slice(&7u16.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let err = read_store(&path).unwrap_err();
        assert_eq!(err.to_string(), "unsupported version 7");
    }

    #[test]
    fn corrupted_header_rejected_even_without_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.lpce");
        let mut bytes = store(1000, 1000).header().to_vec();
        bytes[1] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_store(&path), Err(Error::NotAStore(_))));
    }

    #[test]
    fn unit_norm_flag_is_checked() {
        let data = vec![1.0, 0.0, 0.5, 0.5];
        let err = EmbeddingStore::new(2, 2, data, true, Manifest::default()).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn manifest_label_range_checked() {
        let mut m = manifest(2);
        m.labels = Some(vec![0, 2]);
        assert!(EmbeddingStore::new(2, 1, vec![0.0; 2], false, m).is_err());
    }

    fn write_group(dir: &Path, weak: (usize, usize), strong: &[(usize, usize)]) {
        write_store(&store(weak.0, weak.1), &dir.join(WEAK_STORE)).unwrap();
        for (k, &(r, c)) in strong.iter().enumerate() {
            write_store(&store(r, c), &dir.join(strong_store_name(k))).unwrap();
        }
    }

    #[test]
    fn valid_group_with_two_strong_views() {
        let dir = tempfile::tempdir().unwrap();
        write_group(dir.path(), (100, 64), &[(100, 64), (100, 64)]);
        let r = validate_view_group(dir.path());
        assert!(r.valid, "{:?}", r.issues);
        assert_eq!((r.strong_views, r.rows, r.cols), (2, 100, 64));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_group(dir.path(), (100, 64), &[(100, 64), (100, 32)]);
        let r = validate_view_group(dir.path());
        assert!(!r.valid);
        assert!(r.issues.iter().any(|i| i.starts_with("dimension mismatch")));
    }

    #[test]
    fn empty_directory_reports_missing_weak() {
        let dir = tempfile::tempdir().unwrap();
        let r = validate_view_group(dir.path());
        assert!(!r.valid);
        assert_eq!(r.issues, vec!["missing weak store".to_string()]);
    }

    #[test]
    fn view_group_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = ViewGroup::new(store(4, 3), vec![store(4, 3)], manifest(4)).unwrap();
        write_view_group(&g, dir.path()).unwrap();
        let back = read_view_group(dir.path()).unwrap();
        assert_eq!(back.num_strong(), 1);
        assert_eq!(back.manifest.strong_views, Some(1));
        assert_eq!(back.weak, g.weak);
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let mut x = seed;
            let data: Vec<f32> = (0..rows * cols).map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = f32::from_bits((x >> 32) as u32);
                if v.is_finite() { v } else { 0.0 }
            }).collect();
            let s = EmbeddingStore::new(rows, cols, data, false, Manifest::default()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("p.lpce");
            write_store(&s, &p).unwrap();
            let back = read_store(&p).unwrap();
            let a: Vec<u32> = s.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!((back.rows(), back.cols()), (rows, cols));
        }

        #[test]
        fn group_valid_iff_shapes_agree(shapes in proptest::collection::vec((1usize..4, 1usize..4), 1..4)) {
            let dir = tempfile::tempdir().unwrap();
            write_group(dir.path(), shapes[0], &shapes[1..]);
            let r = validate_view_group(dir.path());
            let agree = shapes.iter().all(|s| *s == shapes[0]);
            prop_assert_eq!(r.valid, agree);
        }
    }
}
