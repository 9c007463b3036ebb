use std::collections::HashSet;
use std::fmt::Write as _;

use super::QMatrixError;

/// Binary item × attribute matrix with labelled axes.
///
/// Cells are stored row-major. The type is immutable once built; use
/// [`QMatrix::from_fn`] or [`QMatrix::new`] to construct one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QMatrix {
    item_ids: Vec<String>,
    attribute_ids: Vec<String>,
    cells: Vec<u8>,
}

fn check_axis(ids: &[String], axis: &'static str) -> Result<(), QMatrixError> {
    if ids.is_empty() {
        return Err(QMatrixError::EmptyAxis(axis));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    for (pos, id) in ids.iter().enumerate() {
        if id.is_empty() || id.contains(',') || id.contains('\n') {
            return Err(QMatrixError::InvalidId { position: pos });
        }
        if !seen.insert(id.as_str()) {
            return Err(QMatrixError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

impl QMatrix {
    pub fn new(item_ids: Vec<String>, attribute_ids: Vec<String>, cells: Vec<u8>) -> Result<Self, QMatrixError> {
        check_axis(&item_ids, "item")?;
        check_axis(&attribute_ids, "attribute")?;
        if cells.len() != item_ids.len() * attribute_ids.len() {
            return Err(QMatrixError::Shape { expected: item_ids.len() * attribute_ids.len(), actual: cells.len() });
        }
        if let Some(pos) = cells.iter().position(|&c| c > 1) {
            let k = attribute_ids.len();
            return Err(QMatrixError::NonBinary {
                row: pos / k + 1,
                column: attribute_ids[pos % k].clone(),
                value: cells[pos].to_string(),
            });
        }
        Ok(Self { item_ids, attribute_ids, cells })
    }

    pub fn zeros(item_ids: Vec<String>, attribute_ids: Vec<String>) -> Result<Self, QMatrixError> {
        let n = item_ids.len() * attribute_ids.len();
        Self::new(item_ids, attribute_ids, vec![0; n])
    }

    pub fn from_fn(
        item_ids: Vec<String>,
        attribute_ids: Vec<String>,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, QMatrixError> {
        let k = attribute_ids.len();
        let mut cells = Vec::with_capacity(item_ids.len() * k);
        for i in 0..item_ids.len() {
            for j in 0..k {
                cells.push(f(i, j) as u8);
            }
        }
        Self::new(item_ids, attribute_ids, cells)
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn attribute_ids(&self) -> &[String] {
        &self.attribute_ids
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_ids.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn get(&self, item: usize, attribute: usize) -> bool {
        self.cells[item * self.attribute_ids.len() + attribute] == 1
    }

    #[inline]
    pub fn row(&self, item: usize) -> &[u8] {
        let k = self.attribute_ids.len();
        &self.cells[item * k..(item + 1) * k]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_ids.iter().position(|x| x == id)
    }

    pub fn ones(&self) -> usize {
        self.cells.iter().filter(|&&c| c == 1).count()
    }

    /// Coordinates of every 1-cell, row-major.
    pub fn one_cells(&self) -> Vec<(usize, usize)> {
        let k = self.attribute_ids.len();
        self.cells.iter().enumerate().filter(|(_, &c)| c == 1).map(|(p, _)| (p / k, p % k)).collect()
    }

    /// Items whose row is all zeros.
    pub fn degenerate_items(&self) -> Vec<String> {
        (0..self.n_items()).filter(|&i| self.row(i).iter().all(|&c| c == 0)).map(|i| self.item_ids[i].clone()).collect()
    }

    pub fn same_axes(&self, other: &QMatrix) -> Result<(), QMatrixError> {
        first_mismatch(&self.item_ids, &other.item_ids, "item")?;
        first_mismatch(&self.attribute_ids, &other.attribute_ids, "attribute")
    }

    /// Returns a copy with the given cells flipped to `value`.
    pub fn with_cells(&self, updates: &[(usize, usize, bool)]) -> QMatrix {
        let mut out = self.clone();
        let k = self.attribute_ids.len();
        for &(i, j, v) in updates {
            out.cells[i * k + j] = v as u8;
        }
        out
    }

    /// Parses the Q-matrix CSV dialect: header `item,<attr ids...>`, one row
    /// per item, cells strictly `0` or `1`.
    pub fn parse_csv(text: &str) -> Result<Self, QMatrixError> {
        let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));
        let header = lines.next().ok_or(QMatrixError::EmptyAxis("item"))?;
        let mut head = header.split(',');
        match head.next() {
            Some("item") => {}
            other => {
                return Err(QMatrixError::Csv {
                    row: 0,
                    message: format!("first header cell must be \"item\", found {:?}", other.unwrap_or("")),
                })
            }
        }
        let attribute_ids: Vec<String> = head.map(str::to_string).collect();
        check_axis(&attribute_ids, "attribute")?;

        let k = attribute_ids.len();
        let mut item_ids = Vec::new();
        let mut seen = HashSet::new();
        let mut cells = Vec::new();
        for (n, line) in lines.enumerate() {
            let row = n + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != k + 1 {
                return Err(QMatrixError::Csv {
                    row,
                    message: format!("expected {} fields, found {}", k + 1, fields.len()),
                });
            }
            let id = fields[0];
            if id.is_empty() {
                return Err(QMatrixError::Csv { row, message: "empty item id".into() });
            }
            if !seen.insert(id.to_string()) {
                return Err(QMatrixError::Csv { row, message: format!("duplicate item id {id:?}") });
            }
            item_ids.push(id.to_string());
            for (j, cell) in fields[1..].iter().enumerate() {
                let value = match *cell {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(QMatrixError::NonBinary {
                            row,
                            column: attribute_ids[j].clone(),
                            value: other.to_string(),
                        })
                    }
                };
                cells.push(value);
            }
        }
        Self::new(item_ids, attribute_ids, cells)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity((self.n_items() + 1) * (self.n_attributes() * 2 + 8));
        out.push_str("item");
        for a in &self.attribute_ids {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
        for (i, id) in self.item_ids.iter().enumerate() {
            out.push_str(id);
            for &c in self.row(i) {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

fn first_mismatch(a: &[String], b: &[String], axis: &'static str) -> Result<(), QMatrixError> {
    for (pos, (x, y)) in a.iter().zip(b).enumerate() {
        if x != y {
            return Err(QMatrixError::AxisMismatch { axis, position: pos, left: x.clone(), right: y.clone() });
        }
    }
    if a.len() != b.len() {
        let pos = a.len().min(b.len());
        let show = |v: &[String]| v.get(pos).cloned().unwrap_or_else(|| "<none>".into());
        return Err(QMatrixError::AxisMismatch { axis, position: pos, left: show(a), right: show(b) });
    }
    Ok(())
}
