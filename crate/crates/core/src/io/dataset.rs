use crate::error::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// A column picked by header name or by 0-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl FromStr for ColumnSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("empty column selector".into()));
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    /// Defaults to the first column.
    pub column: Option<ColumnSelector>,
    pub group: Option<ColumnSelector>,
    /// `None` detects a header from the first row.
    pub has_header: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub name: String,
    pub values: Vec<f64>,
    pub groups: Option<Vec<String>>,
    pub source: PathBuf,
}

impl Dataset {
    /// Values split by group label, in order of first appearance.
    pub fn grouped(&self) -> Vec<(String, Vec<f64>)> {
        let Some(labels) = &self.groups else {
            return vec![(self.name.clone(), self.values.clone())];
        };
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        for (label, &v) in labels.iter().zip(&self.values) {
            match out.iter_mut().find(|(l, _)| l == label) {
                Some((_, vs)) => vs.push(v),
                None => out.push((label.clone(), vec![v])),
            }
        }
        out
    }
}

fn resolve(sel: &ColumnSelector, header: Option<&csv::StringRecord>) -> Result<usize> {
    match sel {
        ColumnSelector::Index(i) => Ok(*i),
        ColumnSelector::Name(name) => {
            let header = header.ok_or_else(|| Error::Config(format!("column '{name}' requested but the file has no header")))?;
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("no column named '{name}' (columns: {})", header.iter().collect::<Vec<_>>().join(", "))))
        }
    }
}

/// Reads one numeric column, and optionally a group column, from a CSV file.
///
/// Blank lines and lines starting with `#` are skipped. Row numbers in errors are
/// 1-based file lines.
pub fn read_dataset(path: &Path, options: &ReadOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push((line, rec));
    }
    let header_present = match options.has_header {
        Some(h) => h,
        None => records.first().is_some_and(|(_, r)| r.iter().any(|c| c.parse::<f64>().is_err())),
    };
    let (header, rows) = if header_present && !records.is_empty() {
        (Some(records[0].1.clone()), &records[1..])
    } else {
        (None, &records[..])
    };
    let col = resolve(options.column.as_ref().unwrap_or(&ColumnSelector::Index(0)), header.as_ref())?;
    let group_col = options.group.as_ref().map(|g| resolve(g, header.as_ref())).transpose()?;

    let mut values = Vec::with_capacity(rows.len());
    let mut groups = group_col.map(|_| Vec::with_capacity(rows.len()));
    for (line, rec) in rows {
        let cell = rec.get(col).ok_or_else(|| Error::Parse { row: *line, message: format!("missing column {col}") })?;
        let v: f64 = cell
            .parse()
            .map_err(|_| Error::Parse { row: *line, message: format!("'{cell}' is not a number") })?;
        if !v.is_finite() {
            return Err(Error::Parse { row: *line, message: format!("'{cell}' is not a finite number") });
        }
        values.push(v);
        if let (Some(g), Some(labels)) = (group_col, groups.as_mut()) {
            match rec.get(g) {
                Some(label) if !label.is_empty() => labels.push(label.to_string()),
                _ => return Err(Error::Parse { row: *line, message: format!("missing group label in column {g}") }),
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Parse { row: records.last().map_or(1, |r| r.0), message: "no data rows selected".into() });
    }
    let name = match (&header, col) {
        (Some(h), c) => h.get(c).unwrap_or("value").to_string(),
        (None, _) => path.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned()),
    };
    Ok(Dataset { name, values, groups, source: path.to_path_buf() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn headerless_single_column() {
        let f = file("1.0\n2.5\n");
        let d = read_dataset(f.path(), &ReadOptions::default()).unwrap();
        assert_eq!(d.values, vec![1.0, 2.5]);
        assert!(d.groups.is_none());
    }

    #[test]
    fn named_column_and_groups() {
        let f = file("flow,site\n3.5,a\n4.0,b\n# note\n\n5.5,a\n");
        let opts = ReadOptions { column: Some("flow".parse().unwrap()), group: Some("site".parse().unwrap()), has_header: None };
        let d = read_dataset(f.path(), &opts).unwrap();
        assert_eq!(d.name, "flow");
        assert_eq!(d.values, vec![3.5, 4.0, 5.5]);
        let g = d.grouped();
        assert_eq!(g[0], ("a".to_string(), vec![3.5, 5.5]));
        assert_eq!(g[1], ("b".to_string(), vec![4.0]));
        let by_index = ReadOptions { column: Some(ColumnSelector::Index(0)), ..ReadOptions::default() };
        assert_eq!(read_dataset(f.path(), &by_index).unwrap().values, d.values);
    }

    #[test]
    fn rejections() {
        let f = file("1.0\nNaN\n3\n");
        match read_dataset(f.path(), &ReadOptions::default()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        let f = file("x\n1\nabc\n");
        match read_dataset(f.path(), &ReadOptions::default()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        let f = file("x\n");
        assert!(matches!(read_dataset(f.path(), &ReadOptions::default()), Err(Error::Parse { .. })));
        let f = file("1\n2\n");
        let named = ReadOptions { column: Some("flow".parse().unwrap()), ..ReadOptions::default() };
        assert!(matches!(read_dataset(f.path(), &named), Err(Error::Config(_))));
        let err = read_dataset(Path::new("/nonexistent/file.csv"), &ReadOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
