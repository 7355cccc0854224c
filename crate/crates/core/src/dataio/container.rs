use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const LABELS_FILE: &str = "labels.csv";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub num_samples: usize,
    pub text_dim: usize,
    pub image_dim: usize,
    pub num_classes: usize,
    pub label_names: Vec<String>,
    pub dtype: String,
    pub endianness: String,
}

/// One speech item. Embeddings are kept in their on-disk single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub text_emb: Vec<f32>,
    pub image_emb: Vec<f32>,
    pub label: usize,
    pub token_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    text_dim: usize,
    image_dim: usize,
    label_names: Vec<String>,
    records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn new(
        text_dim: usize,
        image_dim: usize,
        label_names: Vec<String>,
        records: Vec<SampleRecord>,
    ) -> Result<Self> {
        let d = Dataset {
            text_dim,
            image_dim,
            label_names,
            records,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.text_dim == 0 || self.image_dim == 0 {
            return Err(Error::Validation("embedding dims must be >= 1".into()));
        }
        if self.label_names.len() < 2 {
            return Err(Error::Validation("need at least 2 classes".into()));
        }
        if self.records.is_empty() {
            return Err(Error::Validation("dataset has no samples".into()));
        }
        let mut seen = HashSet::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            if r.text_emb.len() != self.text_dim || r.image_emb.len() != self.image_dim {
                return Err(Error::Validation(format!(
                    "sample {i} ('{}') has embedding dims ({}, {}), expected ({}, {})",
                    r.id,
                    r.text_emb.len(),
                    r.image_emb.len(),
                    self.text_dim,
                    self.image_dim
                )));
            }
            if r.label >= self.num_classes() {
                return Err(Error::Validation(format!(
                    "sample '{}' has label {} but num_classes is {}",
                    r.id,
                    r.label,
                    self.num_classes()
                )));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate id '{}'", r.id)));
            }
        }
        Ok(())
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.text_dim,
            self.image_dim,
            self.label_names.clone(),
            indices.iter().map(|&i| self.records[i].clone()).collect(),
        )
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            version: FORMAT_VERSION,
            num_samples: self.records.len(),
            text_dim: self.text_dim,
            image_dim: self.image_dim,
            num_classes: self.num_classes(),
            label_names: self.label_names.clone(),
            dtype: "f32".into(),
            endianness: "little".into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    id: String,
    label: usize,
    token_count: u32,
}

pub fn save(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let manifest = serde_json::to_string_pretty(&dataset.manifest())?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest + "\n").map_err(|e| Error::io(&path, e))?;

    let per_sample = dataset.text_dim + dataset.image_dim;
    let mut bytes = Vec::with_capacity(dataset.len() * per_sample * 4);
    for r in &dataset.records {
        for v in r.text_emb.iter().chain(&r.image_emb) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let path = dir.join(EMBEDDINGS_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(LABELS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    for r in &dataset.records {
        w.serialize(LabelRow {
            id: r.id.clone(),
            label: r.label,
            token_count: r.token_count,
        })?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.dtype != "f32" || manifest.endianness != "little" {
        return Err(Error::Format {
            path,
            detail: format!(
                "unsupported dtype/endianness {}/{} (expected f32/little)",
                manifest.dtype, manifest.endianness
            ),
        });
    }
    if manifest.num_samples == 0
        || manifest.text_dim == 0
        || manifest.image_dim == 0
        || manifest.num_classes == 0
    {
        return Err(Error::Validation("manifest sizes must be >= 1".into()));
    }
    if manifest.label_names.len() != manifest.num_classes {
        return Err(Error::Validation(format!(
            "label_names has {} entries but num_classes is {}",
            manifest.label_names.len(),
            manifest.num_classes
        )));
    }

    let path = dir.join(EMBEDDINGS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let per_sample = manifest.text_dim + manifest.image_dim;
    let expected = manifest.num_samples * per_sample * 4;
    if bytes.len() != expected {
        return Err(Error::Format {
            path,
            detail: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }

    let path = dir.join(LABELS_FILE);
    let mut reader = csv::Reader::from_path(&path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "label", "token_count"] {
        return Err(Error::Format {
            path,
            detail: format!("header must be 'id,label,token_count', found {headers:?}"),
        });
    }
    let rows: Vec<LabelRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, csv::Error>>()?;
    if rows.len() != manifest.num_samples {
        return Err(Error::Format {
            path,
            detail: format!(
                "expected {} rows, found {}",
                manifest.num_samples,
                rows.len()
            ),
        });
    }

    let records = rows
        .into_iter()
        .zip(bytes.chunks_exact(per_sample * 4))
        .map(|(row, chunk)| {
            let mut vals = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
            let text_emb: Vec<f32> = vals.by_ref().take(manifest.text_dim).collect();
            let image_emb: Vec<f32> = vals.collect();
            SampleRecord {
                id: row.id,
                text_emb,
                image_emb,
                label: row.label,
                token_count: row.token_count,
            }
        })
        .collect();

    Dataset::new(
        manifest.text_dim,
        manifest.image_dim,
        manifest.label_names,
        records,
    )
}
