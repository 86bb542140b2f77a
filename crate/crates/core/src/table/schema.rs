use serde::{Deserialize, Serialize};

use super::value::ColumnType;
use super::TableError;

/// One documented column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
    #[serde(default)]
    pub description: String,
    /// Closed list of admissible text values, for status-like fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        FieldSpec {
            name: name.into(),
            ty,
            description: String::new(),
            states: None,
        }
    }

    pub fn describe(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_states<I, S>(mut self, states: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.states = Some(states.into_iter().map(Into::into).collect());
        self
    }

    /// Whether `text` is admissible under the field's `states`, if any.
    pub fn admits_state(&self, text: &str) -> bool {
        match &self.states {
            None => true,
            Some(states) => states.iter().any(|s| s == text),
        }
    }
}

/// Ordered, non-empty list of uniquely named fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct Schema {
    fields: Vec<FieldSpec>,
}

#[derive(Deserialize)]
struct RawSchema {
    fields: Vec<FieldSpec>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = TableError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        Schema::new(raw.fields)
    }
}

impl Schema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Schema, TableError> {
        if fields.is_empty() {
            return Err(TableError::Schema("schema has no fields".into()));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.name.trim().is_empty() {
                return Err(TableError::Schema(format!("field #{i} has an empty name")));
            }
            if fields[..i].iter().any(|g| g.name.eq_ignore_ascii_case(&f.name)) {
                return Err(TableError::Schema(format!(
                    "duplicate field name {:?} (names are case-insensitive)",
                    f.name
                )));
            }
            if f.states.is_some() && f.ty != ColumnType::Text {
                return Err(TableError::Schema(format!(
                    "field {:?} declares states but is not a text field",
                    f.name
                )));
            }
        }
        Ok(Schema { fields })
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, index: usize) -> &FieldSpec {
        &self.fields[index]
    }

    /// Case-insensitive lookup.
    pub fn resolve(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name.eq_ignore_ascii_case(name))
    }

    pub fn get(&self, name: &str) -> Option<&FieldSpec> {
        self.resolve(name).map(|i| &self.fields[i])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    /// Field names within edit distance 3 of `name`, closest first.
    pub fn near_matches(&self, name: &str) -> Vec<String> {
        let needle = name.to_ascii_lowercase();
        let mut scored: Vec<(usize, &str)> = self
            .fields
            .iter()
            .map(|f| {
                (
                    strsim::levenshtein(&needle, &f.name.to_ascii_lowercase()),
                    f.name.as_str(),
                )
            })
            .filter(|(d, _)| *d <= 3)
            .collect();
        scored.sort();
        scored.into_iter().map(|(_, n)| n.to_string()).collect()
    }
}
