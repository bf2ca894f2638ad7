use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Item,
    User,
}

impl EntityKind {
    pub fn id_field(self) -> &'static str {
        match self {
            EntityKind::Item => "item_id",
            EntityKind::User => "user_id",
        }
    }
}

/// Side information for one user or item.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    #[serde(default)]
    pub categorical: BTreeMap<String, String>,
    #[serde(default)]
    pub multi: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub numeric: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    item_id: Option<String>,
    user_id: Option<String>,
    #[serde(default)]
    categorical: BTreeMap<String, String>,
    #[serde(default)]
    multi: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    numeric: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct ItemLine<'a> {
    item_id: &'a str,
    #[serde(flatten)]
    record: &'a MetaRecord,
}

#[derive(Serialize)]
struct UserLine<'a> {
    user_id: &'a str,
    #[serde(flatten)]
    record: &'a MetaRecord,
}

/// Metadata rows keyed by the external id.
#[derive(Clone, Debug, PartialEq)]
pub struct MetadataTable {
    pub kind: EntityKind,
    pub rows: BTreeMap<String, MetaRecord>,
}

impl MetadataTable {
    pub fn new(kind: EntityKind) -> Self {
        Self {
            kind,
            rows: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&MetaRecord> {
        self.rows.get(key)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn parse_metadata(path: &Path, kind: EntityKind) -> Result<MetadataTable, DataError> {
    let file = File::open(path).map_err(|e| DataError::file(path, e))?;
    parse_metadata_from(BufReader::new(file), kind)
}

/// Reads JSON lines; blank lines are skipped and each object must carry the
/// id field matching `kind`.
pub fn parse_metadata_from<R: BufRead>(reader: R, kind: EntityKind) -> Result<MetadataTable, DataError> {
    let mut table = MetadataTable::new(kind);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DataError::BadRecord { line: i + 1, message };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let id = match kind {
            EntityKind::Item => raw.item_id,
            EntityKind::User => raw.user_id,
        }
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad(format!("missing {}", kind.id_field())))?;
        let record = MetaRecord {
            categorical: raw.categorical,
            multi: raw.multi,
            numeric: raw.numeric,
        };
        if table.rows.insert(id.clone(), record).is_some() {
            return Err(DataError::DuplicateKey(id));
        }
    }
    Ok(table)
}

pub fn write_metadata(path: &Path, table: &MetadataTable) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::file(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, record) in &table.rows {
        let line = match table.kind {
            EntityKind::Item => serde_json::to_string(&ItemLine { item_id: id, record })?,
            EntityKind::User => serde_json::to_string(&UserLine { user_id: id, record })?,
        };
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
