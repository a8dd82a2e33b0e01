use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::{
    check_id, AttackType, DatasetError, Frame, Group, Label, Presentation, Split, Wavelength,
};

pub const MANIFEST_FILE: &str = "manifest.csv";

const COLUMNS: [&str; 7] = [
    "presentation_id",
    "split",
    "label",
    "attack_type",
    "group",
    "n_frames",
    "path",
];

pub fn manifest_header() -> String {
    COLUMNS.join(",")
}

/// One line of `manifest.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub presentation_id: String,
    pub split: Split,
    pub label: Label,
    pub attack_type: AttackType,
    pub group: Group,
    pub n_frames: usize,
    /// Directory holding the frame files, relative to the dataset root.
    pub path: String,
}

impl ManifestRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.presentation_id,
            self.split,
            self.label,
            self.attack_type,
            self.group,
            self.n_frames,
            self.path
        )
    }
}

pub fn write_manifest(root: &Path, rows: &[ManifestRow]) -> Result<std::path::PathBuf, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    let mut text = manifest_header();
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_line());
        text.push('\n');
    }
    let mut f = fs::File::create(&path).map_err(|e| DatasetError::io(&path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| DatasetError::io(&path, e))?;
    Ok(path)
}

fn parse_rows(text: &str) -> Result<Vec<ManifestRow>, DatasetError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(DatasetError::Manifest {
        row: 0,
        msg: "empty manifest".into(),
    })?;
    let names: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let mut col = [0usize; 7];
    for (slot, want) in col.iter_mut().zip(COLUMNS) {
        *slot = names
            .iter()
            .position(|n| *n == want)
            .ok_or_else(|| DatasetError::Manifest {
                row: 0,
                msg: format!("missing column {want:?}"),
            })?;
    }

    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let row = lineno; // header is row 0
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(DatasetError::Manifest {
                row,
                msg: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
        }
        let bad = |msg: String| DatasetError::Manifest { row, msg };
        let presentation_id = fields[col[0]].to_string();
        check_id(&presentation_id).map_err(|e| bad(e.to_string()))?;
        let split: Split = fields[col[1]].parse().map_err(bad)?;
        let label: Label = fields[col[2]].parse().map_err(bad)?;
        let attack_type: AttackType = fields[col[3]].parse().map_err(bad)?;
        let group: Group = fields[col[4]].parse().map_err(bad)?;
        let n_frames: usize = fields[col[5]]
            .parse()
            .map_err(|_| bad(format!("invalid n_frames {:?}", fields[col[5]])))?;
        if n_frames == 0 {
            return Err(bad("n_frames must be at least 1".into()));
        }
        if attack_type.label() != label {
            return Err(bad(format!(
                "label {label} is inconsistent with attack_type {attack_type}"
            )));
        }
        if attack_type.group() != group {
            return Err(bad(format!(
                "group {group} is inconsistent with attack_type {attack_type}"
            )));
        }
        rows.push(ManifestRow {
            presentation_id,
            split,
            label,
            attack_type,
            group,
            n_frames,
            path: fields[col[6]].to_string(),
        });
    }
    let mut seen = BTreeSet::new();
    for (i, r) in rows.iter().enumerate() {
        if !seen.insert(r.presentation_id.as_str()) {
            return Err(DatasetError::Manifest {
                row: i + 1,
                msg: format!("duplicate presentation id {}", r.presentation_id),
            });
        }
    }
    Ok(rows)
}

/// Wavelengths present for frame 0 in a presentation directory, ascending.
fn discover_wavelengths(dir: &Path) -> Result<Vec<Wavelength>, DatasetError> {
    let mut found = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))? {
        let entry = entry.map_err(|e| DatasetError::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(wl) = name
            .strip_prefix("frame_0_")
            .and_then(|s| s.strip_suffix("nm.pgm"))
            .and_then(|s| s.parse::<Wavelength>().ok())
        {
            found.insert(wl);
        }
    }
    Ok(found.into_iter().collect())
}

/// Reads `manifest.csv` under `root`. Frame files are checked for existence but
/// their pixels are only read when a frame is first accessed.
pub fn load_manifest(root: &Path) -> Result<Vec<Presentation>, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
    let rows = parse_rows(&text)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let dir = root.join(&row.path);
        let wavelengths = discover_wavelengths(&dir)?;
        if wavelengths.is_empty() {
            return Err(DatasetError::io(
                &dir,
                io::Error::new(io::ErrorKind::NotFound, "no frame_0_<wl>nm.pgm files"),
            ));
        }
        let mut frames = Vec::with_capacity(row.n_frames);
        for k in 0..row.n_frames {
            for &wl in &wavelengths {
                let f = dir.join(Frame::file_name(k, wl));
                if !f.is_file() {
                    return Err(DatasetError::io(
                        &f,
                        io::Error::new(io::ErrorKind::NotFound, "missing frame file"),
                    ));
                }
            }
            frames.push(Frame::on_disk(k, dir.clone(), wavelengths.clone()));
        }
        let p = Presentation::new(row.presentation_id, row.attack_type, row.split, frames)
            .map_err(|e| DatasetError::Manifest {
                row: i + 1,
                msg: e.to_string(),
            })?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{write_pgm16, BandImage};

    fn write_presentation(root: &Path, rel: &str, n_frames: usize) {
        let dir = root.join(rel);
        fs::create_dir_all(&dir).unwrap();
        for k in 0..n_frames {
            for wl in [940, 1450] {
                let img = BandImage::filled(2, 2, wl, 0.5).unwrap();
                write_pgm16(&img, &dir.join(Frame::file_name(k, wl))).unwrap();
            }
        }
    }

    fn manifest(root: &Path, body: &str) {
        fs::write(root.join(MANIFEST_FILE), format!("{}\n{body}", manifest_header())).unwrap();
    }

    #[test]
    fn loads_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        for p in ["a", "b", "c"] {
            write_presentation(dir.path(), p, 2);
        }
        manifest(
            dir.path(),
            "a,train,bonafide,none,none,2,a\nb,train,bonafide,none,none,2,b\nc,test,attack,print,impersonation,2,c\n",
        );
        let ps = load_manifest(dir.path()).unwrap();
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[0].split, Split::Train);
        assert_eq!(ps[2].split, Split::Test);
        assert_eq!(ps[2].attack_type, AttackType::Print);
        let stack = ps[2].frames()[1].stack().unwrap();
        assert_eq!(stack.wavelengths().collect::<Vec<_>>(), vec![940, 1450]);
    }

    #[test]
    fn inconsistent_label_names_row() {
        let dir = tempfile::tempdir().unwrap();
        write_presentation(dir.path(), "a", 1);
        manifest(dir.path(), "a,train,bonafide,print,impersonation,1,a\n");
        match load_manifest(dir.path()) {
            Err(DatasetError::Manifest { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_enum_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        write_presentation(dir.path(), "a", 1);
        manifest(dir.path(), "a,holdout,bonafide,none,none,1,a\n");
        assert!(matches!(
            load_manifest(dir.path()),
            Err(DatasetError::Manifest { row: 1, .. })
        ));
        fs::write(
            dir.path().join(MANIFEST_FILE),
            "presentation_id,split,label\na,train,bonafide\n",
        )
        .unwrap();
        assert!(matches!(
            load_manifest(dir.path()),
            Err(DatasetError::Manifest { row: 0, .. })
        ));
    }

    #[test]
    fn missing_frame_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        write_presentation(dir.path(), "a", 1);
        manifest(dir.path(), "a,train,bonafide,none,none,3,a\n");
        assert!(matches!(
            load_manifest(dir.path()),
            Err(DatasetError::Io { .. })
        ));
    }

    #[test]
    fn write_then_parse_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![ManifestRow {
            presentation_id: "x-1".into(),
            split: Split::Dev,
            label: Label::Attack,
            attack_type: AttackType::Tattoo,
            group: Group::Obfuscation,
            n_frames: 4,
            path: "dev/x-1".into(),
        }];
        let p = write_manifest(dir.path(), &rows).unwrap();
        let parsed = parse_rows(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(parsed, rows);
    }
}
