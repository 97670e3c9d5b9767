//! Schema configuration files.
//!
//! ```toml
//! [[attributes]]
//! name = "age"
//! kind = "numeric"
//! lower = 0
//! upper = 125
//! precision = 1
//!
//! [[attributes]]
//! name = "housing"
//! kind = "categorical"
//! values = ["no", "yes"]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeKind, AttributeSpec, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeEntry {
    name: String,
    kind: AttributeKind,
    lower: Option<f64>,
    upper: Option<f64>,
    precision: Option<f64>,
    values: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    attributes: Vec<AttributeEntry>,
}

impl AttributeEntry {
    fn into_spec(self) -> Result<AttributeSpec> {
        let missing = |field: &str| Error::Schema(format!("attribute `{}` needs `{field}`", self.name));
        match self.kind {
            AttributeKind::Numeric => {
                if self.values.is_some() {
                    return Err(Error::Schema(format!("numeric attribute `{}` cannot list values", self.name)));
                }
                let lower = self.lower.ok_or_else(|| missing("lower"))?;
                let upper = self.upper.ok_or_else(|| missing("upper"))?;
                Ok(AttributeSpec::numeric(self.name, lower, upper, self.precision.unwrap_or(1.0)))
            }
            AttributeKind::Categorical => {
                let values = self.values.clone().ok_or_else(|| missing("values"))?;
                if self.lower.is_some() || self.upper.is_some() || self.precision.is_some() {
                    return Err(Error::Schema(format!(
                        "categorical attribute `{}` takes its bounds from `values`",
                        self.name
                    )));
                }
                Ok(AttributeSpec::categorical(self.name, values))
            }
        }
    }
}

pub fn parse_schema(text: &str) -> Result<Schema> {
    let file: SchemaFile = toml::from_str(text)?;
    let specs = file.attributes.into_iter().map(AttributeEntry::into_spec).collect::<Result<Vec<_>>>()?;
    Schema::new(specs)
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    parse_schema(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_and_categorical() {
        let schema = parse_schema(
            r#"
            [[attributes]]
            name = "balance"
            kind = "numeric"
            lower = -100000
            upper = 1000000

            [[attributes]]
            name = "housing"
            kind = "categorical"
            values = ["no", "yes"]
            "#,
        )
        .unwrap();
        assert_eq!(schema.len(), 2);
        assert_eq!(schema.attributes()[0].precision, 1.0);
        assert_eq!(schema.attributes()[1].code_of("yes"), Some(1));
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(parse_schema("[[attributes]]\nname = \"x\"\nkind = \"numeric\"\nlower = 0\n").is_err());
        assert!(parse_schema("[[attributes]]\nname = \"x\"\nkind = \"categorical\"\n").is_err());
        assert!(parse_schema("[[attributes]]\nname = \"x\"\nkind = \"numeric\"\nlower = 3\nupper = 1\n").is_err());
        assert!(parse_schema("[[attributes]]\nname = \"x\"\nkind = \"ordinal\"\n").is_err());
    }

    #[test]
    fn bundled_bank_config_parses() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/bank.toml");
        let schema = load_schema(path).unwrap();
        assert_eq!(schema.len(), 17);
        let cat = schema.attributes().iter().filter(|a| a.kind == AttributeKind::Categorical).count();
        assert_eq!(cat, 10);
        let balance = &schema.attributes()[schema.index_of("balance").unwrap()];
        assert_eq!((balance.lower, balance.upper), (-100_000.0, 1_000_000.0));
    }
}
