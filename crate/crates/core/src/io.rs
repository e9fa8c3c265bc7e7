//! Loading and saving of feature matrices, grayscale images, dataset
//! manifests and score reports.
//!
//! Feature matrices use the GLFM container:
//!
//! ```text
//! "GLFM" | version: u8 = 1 | rows: u32 LE | dim: u32 LE | rows*dim f32 LE, row-major
//! ```
//!
//! CSV matrices (one row per line, comma separated numeric cells) are accepted
//! on load as well. Images are binary 8-bit PGM (P5).

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::util::fmt_sig9;

pub const GLFM_MAGIC: &[u8; 4] = b"GLFM";
pub const GLFM_VERSION: u8 = 1;
const GLFM_HEADER_LEN: usize = 4 + 1 + 4 + 4;

/// What a feature matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureRole {
    /// Latent code of the global (reconstruction) embedder.
    #[default]
    GlobalAe,
    /// Attention-enhanced local deformation feature.
    LocalSa,
}

/// Dense `rows x dim` matrix of per-sample embeddings stored as `f32`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    role: FeatureRole,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, role: FeatureRole) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "feature matrix must be non-empty, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "declared {rows}x{dim} but got {} values",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            rows,
            dim,
            data,
            role,
        })
    }

    /// Builds a matrix from `f64` rows, narrowing to `f32`.
    pub fn from_rows(rows: &[Vec<f64>], role: FeatureRole) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(rows.len(), dim, data, role)
    }

    pub fn n_samples(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn role(&self) -> FeatureRole {
        self.role
    }

    pub fn with_role(mut self, role: FeatureRole) -> Self {
        self.role = role;
        self
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn to_rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row_f64(i)).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            if i >= self.rows {
                return Err(Error::Shape(format!("row {i} out of range ({})", self.rows)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.dim, data, self.role)
    }
}

pub fn encode_glfm(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(GLFM_HEADER_LEN + 4 * m.data.len());
    out.extend_from_slice(GLFM_MAGIC);
    out.push(GLFM_VERSION);
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_glfm(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < GLFM_HEADER_LEN || &bytes[..4] != GLFM_MAGIC {
        return Err(Error::Format("missing GLFM magic".into()));
    }
    if bytes[4] != GLFM_VERSION {
        return Err(Error::Format(format!("unsupported GLFM version {}", bytes[4])));
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let payload = &bytes[GLFM_HEADER_LEN..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("GLFM shape overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "GLFM declares {rows}x{dim} ({expected} bytes) but payload has {} bytes",
            payload.len()
        )));
    }
    if rows == 0 || dim == 0 {
        return Err(Error::Format(format!("GLFM declares empty shape {rows}x{dim}")));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(rows, dim, data, FeatureRole::default())
}

/// Parses a CSV matrix: one row per line, numeric cells, no header.
pub fn parse_csv_matrix(text: &str) -> Result<FeatureMatrix> {
    let mut dim = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for cell in line.split(',') {
            let v: f32 = cell.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: non-numeric cell {:?}", lineno + 1, cell))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("line {}: non-finite cell", lineno + 1)));
            }
            data.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(Error::Format(format!(
                    "line {}: expected {d} cells, found {count}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let dim = dim.ok_or_else(|| Error::Format("empty CSV matrix".into()))?;
    FeatureMatrix::new(rows, dim, data, FeatureRole::default())
}

/// Loads a GLFM file, or a CSV matrix when the magic is absent.
pub fn load_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(GLFM_MAGIC) {
        return decode_glfm(&bytes);
    }
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| Error::Format(format!("{}: neither GLFM nor UTF-8 CSV", path.display())))?;
    parse_csv_matrix(text)
}

pub fn save_feature_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_glfm(m)).map_err(|e| Error::io(path, e))
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("image must be non-empty, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixels scaled to `[0, 1]`.
    pub fn to_unit_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments before each header token
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format("PGM header value out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval must be 255, got {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing whitespace after PGM maxval".into()));
    }
    pos += 1;
    let n = width * height;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(Error::Format(format!(
            "PGM payload truncated: need {n} bytes, have {}",
            payload.len()
        )));
    }
    GrayImage::new(width, height, payload[..n].to_vec()).map_err(|e| Error::Format(e.to_string()))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub layout: PathBuf,
    pub prediction: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

/// Ordered list of samples; ids are unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.sample_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses manifest TSV text. Relative paths are resolved against `base`.
/// Blank lines and lines starting with `#` are skipped; empty or `-`
/// prediction/ground-truth fields mean "absent".
pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    let resolve = |s: &str| -> Option<PathBuf> {
        let s = s.trim();
        if s.is_empty() || s == "-" {
            None
        } else {
            let p = Path::new(s);
            Some(if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
        }
    };
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 4 {
            return Err(Error::Format(format!(
                "manifest line {}: expected 2-4 tab-separated fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Format(format!("manifest line {}: empty id", lineno + 1)));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Format(format!("duplicate sample id {id:?}")));
        }
        let layout = resolve(fields[1])
            .ok_or_else(|| Error::Format(format!("manifest line {}: missing layout", lineno + 1)))?;
        entries.push(ManifestEntry {
            sample_id: id,
            layout,
            prediction: fields.get(2).and_then(|s| resolve(s)),
            ground_truth: fields.get(3).and_then(|s| resolve(s)),
        });
    }
    Ok(DatasetManifest { entries })
}

/// Loads a manifest and checks that every referenced file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let manifest = parse_manifest(&text, base)?;
    for e in &manifest.entries {
        for p in [Some(&e.layout), e.prediction.as_ref(), e.ground_truth.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
                ));
            }
        }
    }
    Ok(manifest)
}

pub fn save_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let mut out = String::new();
    for e in &m.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.sample_id,
            e.layout.display(),
            opt(&e.prediction),
            opt(&e.ground_truth)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: String,
    pub theta_local: f64,
    pub theta_global: f64,
    pub theta_novel: f64,
    pub is_novel: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
}

pub const REPORT_HEADER: &str = "id,theta_local,theta_global,theta_novel,is_novel";

fn check_csv_id(id: &str) -> Result<()> {
    if id.contains([',', '\n', '\r', '"']) {
        return Err(Error::Data(format!("id {id:?} cannot be written to CSV")));
    }
    Ok(())
}

pub fn format_score_report(report: &ScoreReport) -> Result<String> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.rows {
        check_csv_id(&r.sample_id)?;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.sample_id,
            fmt_sig9(r.theta_local),
            fmt_sig9(r.theta_global),
            fmt_sig9(r.theta_novel),
            r.is_novel
        ));
    }
    Ok(out)
}

pub fn write_score_report(report: &ScoreReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_score_report(report)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn parse_score_report(text: &str) -> Result<ScoreReport> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::Format("score report header mismatch".into()));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Format(format!("non-numeric score {s:?}")))
    };
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Format(format!("expected 5 columns: {line:?}")));
        }
        rows.push(ScoreRow {
            sample_id: f[0].to_string(),
            theta_local: num(f[1])?,
            theta_global: num(f[2])?,
            theta_novel: num(f[3])?,
            is_novel: f[4]
                .parse()
                .map_err(|_| Error::Format(format!("bad boolean {:?}", f[4])))?,
        });
    }
    Ok(ScoreReport { rows })
}

pub fn read_score_report(path: impl AsRef<Path>) -> Result<ScoreReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_score_report(&text)
}

/// Reads one id per non-empty line.
pub fn load_ids(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn save_ids(ids: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = ids.join("\n");
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn glfm_bytes(rows: u32, dim: u32, vals: &[f32]) -> Vec<u8> {
        let mut b = b"GLFM\x01".to_vec();
        b.extend_from_slice(&rows.to_le_bytes());
        b.extend_from_slice(&dim.to_le_bytes());
        for v in vals {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn glfm_two_by_three() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.glfm");
        fs::write(&p, glfm_bytes(2, 3, &[1., 2., 3., 4., 5., 6.])).unwrap();
        let m = load_feature_matrix(&p).unwrap();
        assert_eq!((m.n_samples(), m.dim()), (2, 3));
        assert_eq!(m.row(1), &[4., 5., 6.]);
    }

    #[test]
    fn glfm_truncated_payload_is_format_error() {
        let err = decode_glfm(&glfm_bytes(2, 3, &[1., 2., 3., 4., 5.])).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn glfm_bad_magic_and_version() {
        let mut b = glfm_bytes(1, 1, &[1.0]);
        b[0] = b'X';
        assert!(matches!(decode_glfm(&b), Err(Error::Format(_))));
        let mut b = glfm_bytes(1, 1, &[1.0]);
        b[4] = 2;
        assert!(matches!(decode_glfm(&b), Err(Error::Format(_))));
    }

    #[test]
    fn glfm_nan_is_data_error() {
        let b = glfm_bytes(1, 2, &[1.0, f32::NAN]);
        assert!(matches!(decode_glfm(&b), Err(Error::Data(_))));
    }

    #[test]
    fn csv_matrix() {
        let m = parse_csv_matrix("1,2\n3,4").unwrap();
        assert_eq!((m.n_samples(), m.dim()), (2, 2));
        assert_eq!(m.data(), &[1., 2., 3., 4.]);
        assert!(matches!(parse_csv_matrix("1,2\n3"), Err(Error::Format(_))));
        assert!(matches!(parse_csv_matrix("1,x"), Err(Error::Format(_))));
        assert!(matches!(parse_csv_matrix("1,inf"), Err(Error::Data(_))));
        assert!(matches!(parse_csv_matrix("NaN,1"), Err(Error::Data(_))));
    }

    #[test]
    fn csv_loaded_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "1,2\n3,4\n").unwrap();
        let m = load_feature_matrix(&p).unwrap();
        assert_eq!(m.row(0), &[1., 2.]);
    }

    #[test]
    fn pgm_two_by_two() {
        let mut b = b"P5\n2 2\n255\n".to_vec();
        b.extend_from_slice(&[0, 255, 128, 64]);
        let img = decode_pgm(&b).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 255, 128, 64]);
        assert_eq!(img.get(1, 1), 64);
    }

    #[test]
    fn pgm_with_comment_roundtrips() {
        let mut b = b"P5 # a comment\n3 1\n# another\n255 ".to_vec();
        b.extend_from_slice(&[1, 2, 3]);
        let img = decode_pgm(&b).unwrap();
        assert_eq!(img.pixels(), &[1, 2, 3]);
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_ascii_maxval_and_truncation() {
        assert!(matches!(decode_pgm(b"P2\n1 1\n255\n0\n"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n1 1\n65535\n\0\0"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\0\0\0"), Err(Error::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n2"), Err(Error::Format(_))));
    }

    #[test]
    fn manifest_order_and_duplicates() {
        let base = Path::new("/data");
        let m = parse_manifest("b\tb.pgm\tbp.pgm\tbg.pgm\na\ta.pgm\n", base).unwrap();
        assert_eq!(m.ids(), vec!["b", "a"]);
        assert_eq!(m.entries[0].prediction.as_deref(), Some(Path::new("/data/bp.pgm")));
        assert_eq!(m.entries[1].ground_truth, None);
        let err = parse_manifest("a\tx.pgm\na\ty.pgm\n", base).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn manifest_missing_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        fs::write(&p, "a\tnope.pgm\n").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Io { .. })));
    }

    #[test]
    fn report_one_row_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let report = ScoreReport {
            rows: vec![ScoreRow {
                sample_id: "a".into(),
                theta_local: 1.0,
                theta_global: 2.0,
                theta_novel: 3.0,
                is_novel: true,
            }],
        };
        write_score_report(&report, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "id,theta_local,theta_global,theta_novel,is_novel\na,1,2,3,true\n");
        assert_eq!(text.lines().count(), 2);

        write_score_report(&ScoreReport::default(), &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), format!("{REPORT_HEADER}\n"));
    }

    #[test]
    fn report_unwritable_path() {
        let err = write_score_report(&ScoreReport::default(), "/nonexistent-dir/x/r.csv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn glfm_is_bit_lossless(rows in 1usize..6, dim in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * dim)
                .map(|_| f32::from_bits(rng.gen::<u32>()))
                .map(|v| if v.is_finite() { v } else { 0.5 })
                .collect();
            let m = FeatureMatrix::new(rows, dim, data, FeatureRole::LocalSa).unwrap();
            let back = decode_glfm(&encode_glfm(&m)).unwrap();
            let a: Vec<u32> = m.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn report_roundtrip_within_tolerance(
            vals in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, any::<bool>()), 0..20)
        ) {
            let report = ScoreReport {
                rows: vals.iter().enumerate().map(|(i, &(l, g, n, b))| ScoreRow {
                    sample_id: format!("s{i}"),
                    theta_local: l, theta_global: g, theta_novel: n, is_novel: b,
                }).collect(),
            };
            let back = parse_score_report(&format_score_report(&report).unwrap()).unwrap();
            prop_assert_eq!(back.rows.len(), report.rows.len());
            for (a, b) in report.rows.iter().zip(&back.rows) {
                for (x, y) in [(a.theta_local, b.theta_local), (a.theta_global, b.theta_global), (a.theta_novel, b.theta_novel)] {
                    prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
                }
                prop_assert_eq!(a.is_novel, b.is_novel);
            }
        }
    }
}
