//! Column roles and the translation from CSV text to model inputs.

use std::collections::BTreeMap;

use featgp_core::VariableRole;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::table::{parse_number, Table};

/// A role as written in the config file: `"continuous"`, `"binary"` or
/// `{ categorical = ["a", "b", ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoleDecl {
    Named(NamedRole),
    Categorical { categorical: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedRole {
    Continuous,
    Binary,
}

/// Column name to declared role. Undeclared feature columns are continuous.
pub type SchemaDecl = BTreeMap<String, RoleDecl>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    Continuous,
    /// Cells are `0` or `1`.
    Binary,
    /// Cells are matched as text against `levels` and encoded as the level
    /// position `0, 1, …`.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub role: ColumnRole,
}

/// The resolved layout of a data set: one target and the ordered feature
/// columns with their roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub target: String,
    pub features: Vec<Column>,
}

fn role_from_decl(name: &str, decl: &RoleDecl) -> Result<ColumnRole> {
    Ok(match decl {
        RoleDecl::Named(NamedRole::Continuous) => ColumnRole::Continuous,
        RoleDecl::Named(NamedRole::Binary) => ColumnRole::Binary,
        RoleDecl::Categorical { categorical } => {
            if categorical.is_empty() {
                return Err(CliError::Usage(format!("column `{name}` declares no categories")));
            }
            for (i, level) in categorical.iter().enumerate() {
                if categorical[..i].contains(level) {
                    return Err(CliError::Usage(format!("column `{name}` repeats category `{level}`")));
                }
            }
            ColumnRole::Categorical {
                levels: categorical.clone(),
            }
        }
    })
}

impl Schema {
    /// Every header except `target` becomes a feature, in file order.
    pub fn resolve(headers: &[String], target: &str, decl: &SchemaDecl) -> Result<Self> {
        if !headers.iter().any(|h| h == target) {
            return Err(CliError::Usage(format!("target column `{target}` is not in the data")));
        }
        if let Some(name) = decl.keys().find(|k| !headers.contains(k)) {
            return Err(CliError::Usage(format!("schema names unknown column `{name}`")));
        }
        let features = headers
            .iter()
            .filter(|h| *h != target)
            .map(|h| {
                let role = match decl.get(h) {
                    Some(d) => role_from_decl(h, d)?,
                    None => ColumnRole::Continuous,
                };
                Ok(Column { name: h.clone(), role })
            })
            .collect::<Result<Vec<_>>>()?;
        if features.is_empty() {
            return Err(CliError::Usage("the data has no feature columns".into()));
        }
        Ok(Self {
            target: target.to_owned(),
            features,
        })
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn roles(&self) -> Vec<VariableRole> {
        self.features
            .iter()
            .map(|c| match &c.role {
                ColumnRole::Continuous => VariableRole::Continuous,
                ColumnRole::Binary => VariableRole::Binary,
                ColumnRole::Categorical { levels } => VariableRole::Categorical {
                    levels: (0..levels.len()).map(|k| k as f64).collect(),
                },
            })
            .collect()
    }

    /// Checks that a config-file declaration agrees with this schema.
    pub fn check_decl(&self, decl: &SchemaDecl) -> Result<()> {
        for (name, d) in decl {
            let Some(col) = self.features.iter().find(|c| &c.name == name) else {
                return Err(CliError::Data(format!("schema drift: `{name}` is not a feature of the fitted model")));
            };
            if role_from_decl(name, d)? != col.role {
                return Err(CliError::Data(format!("schema drift: role of `{name}` differs from the fitted model")));
            }
        }
        Ok(())
    }

    /// Feature matrix in schema order, plus the target when `with_target`.
    ///
    /// Columns are found by name, so extra columns and a different column
    /// order are accepted; a missing feature column is schema drift.
    pub fn encode(&self, table: &Table, with_target: bool) -> Result<(DMatrix<f64>, Option<Vec<f64>>)> {
        let positions = self
            .features
            .iter()
            .map(|c| {
                table
                    .column_index(&c.name)
                    .ok_or_else(|| CliError::Data(format!("schema drift: column `{}` is missing", c.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        if table.rows.is_empty() {
            return Err(CliError::Data("the data has no rows".into()));
        }
        let mut x = DMatrix::zeros(table.rows.len(), self.features.len());
        for (i, row) in table.rows.iter().enumerate() {
            for (j, (col, &pos)) in self.features.iter().zip(&positions).enumerate() {
                x[(i, j)] = encode_cell(col, &row[pos], i)?;
            }
        }
        let y = if with_target {
            let pos = table
                .column_index(&self.target)
                .ok_or_else(|| CliError::Data(format!("target column `{}` is missing", self.target)))?;
            let y = table
                .rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    parse_number(&row[pos]).ok_or_else(|| bad_cell(&self.target, &row[pos], i, "a finite number"))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(y)
        } else {
            None
        };
        Ok((x, y))
    }
}

fn bad_cell(column: &str, cell: &str, row: usize, expected: &str) -> CliError {
    CliError::Data(format!("column `{column}`, data row {}: `{cell}` is not {expected}", row + 1))
}

fn encode_cell(col: &Column, cell: &str, row: usize) -> Result<f64> {
    match &col.role {
        ColumnRole::Continuous => parse_number(cell).ok_or_else(|| bad_cell(&col.name, cell, row, "a finite number")),
        ColumnRole::Binary => match parse_number(cell) {
            Some(v) if v == 0.0 || v == 1.0 => Ok(v),
            _ => Err(bad_cell(&col.name, cell, row, "0 or 1")),
        },
        ColumnRole::Categorical { levels } => levels
            .iter()
            .position(|l| l == cell.trim())
            .map(|k| k as f64)
            .ok_or_else(|| bad_cell(&col.name, cell, row, "a declared category")),
    }
}
