//! Data ingestion and column bookkeeping.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which columns are the targets of inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpec {
    /// `"name"` matches exactly; `"prefix*"` matches every column starting with `prefix`.
    Pattern(String),
    List(Vec<String>),
    /// Every non-outcome column.
    All,
}

impl TargetSpec {
    /// Parses the command-line form: a comma separated list, or a single pattern.
    pub fn parse(s: &str) -> TargetSpec {
        if s.contains(',') {
            TargetSpec::List(s.split(',').map(|t| t.trim().to_string()).collect())
        } else {
            TargetSpec::Pattern(s.trim().to_string())
        }
    }

    fn matches(pattern: &str, name: &str) -> bool {
        match pattern.strip_suffix('*') {
            Some(prefix) => name.starts_with(prefix),
            None => name == pattern,
        }
    }

    /// Indices into `names`, in column order.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<usize>> {
        let idx: Vec<usize> = match self {
            TargetSpec::All => (0..names.len()).collect(),
            TargetSpec::Pattern(p) => (0..names.len()).filter(|&j| Self::matches(p, &names[j])).collect(),
            TargetSpec::List(list) => {
                for item in list {
                    if !names.iter().any(|n| n == item) {
                        return Err(Error::ColumnNotFound(item.clone()));
                    }
                }
                (0..names.len())
                    .filter(|&j| list.iter().any(|t| t == &names[j]))
                    .collect()
            }
        };
        if idx.is_empty() {
            let label = match self {
                TargetSpec::Pattern(p) => p.clone(),
                TargetSpec::List(l) => l.join(","),
                TargetSpec::All => "<all>".into(),
            };
            return Err(Error::NoTargetMatch(label));
        }
        Ok(idx)
    }
}

/// Column centering and root-mean-square scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Fails on the first zero-variance column, naming it.
    pub fn fit(x: ArrayView2<f64>, names: &[String]) -> Result<Standardization> {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let m = col.sum() / n;
            let ms = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = ms.sqrt();
            if !(s > 0.0) || is_constant(col.iter().copied()) {
                return Err(Error::ConstantColumn(names[j].clone()));
            }
            means.push(m);
            scales.push(s);
        }
        Ok(Standardization { means, scales })
    }

    /// Standardized copy, column-major so each column is contiguous.
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (n, p) = x.dim();
        let mut z = Array2::<f64>::zeros((n, p).f());
        for j in 0..p {
            let (m, s) = (self.means[j], self.scales[j]);
            z.column_mut(j)
                .iter_mut()
                .zip(x.column(j))
                .for_each(|(zi, xi)| *zi = (xi - m) / s);
        }
        z
    }

    pub fn invert(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut x = z.to_owned();
        for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.means[j], self.scales[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        x
    }
}

fn is_constant(mut it: impl Iterator<Item = f64>) -> bool {
    match it.next() {
        None => true,
        Some(first) => it.all(|v| v == first),
    }
}

/// Outcome, regressors and the subset of regressors under test.
///
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Array1<f64>,
    x: Array2<f64>,
    column_names: Vec<String>,
    outcome_name: String,
    target_index: Vec<usize>,
    standardization: Option<Standardization>,
}

/// Result of [`Dataset::drop_constants`].
#[derive(Debug, Clone)]
pub struct ConstantDrop {
    pub data: Dataset,
    pub dropped: Vec<String>,
    pub dropped_targets: Vec<String>,
}

impl Dataset {
    pub fn new(y: Array1<f64>, x: Array2<f64>, column_names: Vec<String>, target_index: Vec<usize>) -> Result<Dataset> {
        Self::with_outcome_name(y, x, column_names, target_index, "y".to_string())
    }

    pub fn with_outcome_name(
        y: Array1<f64>,
        x: Array2<f64>,
        column_names: Vec<String>,
        mut target_index: Vec<usize>,
        outcome_name: String,
    ) -> Result<Dataset> {
        let (n, p) = x.dim();
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "outcome has {} rows, regressors have {n}",
                y.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 observations, got {n}")));
        }
        if p == 0 {
            return Err(Error::NoRegressors);
        }
        if column_names.len() != p {
            return Err(Error::InvalidInput(format!(
                "{} column names for {p} columns",
                column_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) || *name == outcome_name {
                return Err(Error::NameCollision(name.clone()));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("outcome contains NaN or Inf".into()));
        }
        if let Some(j) = (0..p).find(|&j| x.column(j).iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "column '{}' contains NaN or Inf",
                column_names[j]
            )));
        }
        target_index.sort_unstable();
        let before = target_index.len();
        target_index.dedup();
        if target_index.len() != before {
            return Err(Error::InvalidInput("duplicate target index".into()));
        }
        if target_index.is_empty() {
            return Err(Error::InvalidInput("at least one target column is required".into()));
        }
        if let Some(&bad) = target_index.iter().find(|&&j| j >= p) {
            return Err(Error::InvalidInput(format!(
                "target index {bad} out of range (p = {p})"
            )));
        }
        let standardization = Standardization::fit(x.view(), &column_names).ok();
        Ok(Dataset {
            y,
            x,
            column_names,
            outcome_name,
            target_index,
            standardization,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, outcome: &str, targets: &TargetSpec) -> Result<Dataset> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, outcome, targets)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, outcome: &str, targets: &TargetSpec) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let outcome_col = header
            .iter()
            .position(|h| h == outcome)
            .ok_or_else(|| Error::OutcomeNotFound(outcome.to_string()))?;
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != outcome_col)
            .map(|(_, h)| h.clone())
            .collect();
        let target_index = targets.resolve(&names)?;

        let mut ys = Vec::new();
        let mut xs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            for (j, cell) in rec.iter().enumerate() {
                if cell.is_empty() {
                    return Err(Error::MissingValue {
                        row,
                        column: header[j].clone(),
                    });
                }
                let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                    row,
                    column: header[j].clone(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonNumeric {
                        row,
                        column: header[j].clone(),
                        value: cell.to_string(),
                    });
                }
                if j == outcome_col {
                    ys.push(v);
                } else {
                    xs.push(v);
                }
            }
        }
        let n = ys.len();
        let x = Array2::from_shape_vec((n, names.len()), xs).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::with_outcome_name(Array1::from(ys), x, names, target_index, outcome.to_string())
    }

    /// Writes outcome first, then the regressors. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
        let mut header = vec![self.outcome_name.clone()];
        header.extend(self.column_names.iter().cloned());
        writeln!(out, "{}", header.join(",")).map_err(io_err)?;
        for i in 0..self.n() {
            let mut line = format!("{}", self.y[i]);
            for v in self.x.row(i) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.target_index.len()
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn target_index(&self) -> &[usize] {
        &self.target_index
    }

    pub fn target_names(&self) -> Vec<String> {
        self.target_index
            .iter()
            .map(|&j| self.column_names[j].clone())
            .collect()
    }

    /// Indices of the non-target columns.
    pub fn control_index(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|j| self.target_index.binary_search(j).is_err())
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::ColumnNotFound(name.to_string()))
    }

    /// Cached centering/scaling; an error names the first constant column.
    pub fn standardization(&self) -> Result<&Standardization> {
        match &self.standardization {
            Some(s) => Ok(s),
            None => {
                let j = (0..self.p())
                    .find(|&j| is_constant(self.x.column(j).iter().copied()))
                    .unwrap_or(0);
                Err(Error::ConstantColumn(self.column_names[j].clone()))
            }
        }
    }

    /// Same data with a different target set.
    pub fn with_targets(&self, target_index: Vec<usize>) -> Result<Dataset> {
        Self::with_outcome_name(
            self.y.clone(),
            self.x.clone(),
            self.column_names.clone(),
            target_index,
            self.outcome_name.clone(),
        )
    }

    /// Same regressors with a different outcome.
    pub fn with_outcome(&self, y: Array1<f64>) -> Result<Dataset> {
        Self::with_outcome_name(
            y,
            self.x.clone(),
            self.column_names.clone(),
            self.target_index.clone(),
            self.outcome_name.clone(),
        )
    }

    /// Appends one column `focal * partner` per partner, named `focal:partner`.
    ///
    /// New columns become targets when `focal` is a target.
    pub fn build_interactions(&self, focal: &str, partners: &[String]) -> Result<Dataset> {
        let f = self.column(focal)?;
        let partner_idx = partners.iter().map(|p| self.column(p)).collect::<Result<Vec<_>>>()?;
        let mut names = self.column_names.clone();
        let mut new_cols = Vec::with_capacity(partners.len());
        for (&pj, pname) in partner_idx.iter().zip(partners) {
            let name = format!("{focal}:{pname}");
            if names.contains(&name) || name == self.outcome_name {
                return Err(Error::NameCollision(name));
            }
            names.push(name);
            new_cols.push(&self.x.column(f) * &self.x.column(pj));
        }
        let (n, p) = self.x.dim();
        let mut x = Array2::<f64>::zeros((n, p + new_cols.len()));
        x.slice_mut(ndarray::s![.., ..p]).assign(&self.x);
        for (l, col) in new_cols.into_iter().enumerate() {
            x.column_mut(p + l).assign(&col);
        }
        let mut targets = self.target_index.clone();
        if targets.contains(&f) {
            targets.extend(p..p + partners.len());
        }
        Self::with_outcome_name(self.y.clone(), x, names, targets, self.outcome_name.clone())
    }

    /// Removes zero-variance columns and remaps the target set.
    pub fn drop_constants(&self) -> Result<ConstantDrop> {
        let keep: Vec<usize> = (0..self.p())
            .filter(|&j| !is_constant(self.x.column(j).iter().copied()))
            .collect();
        if keep.is_empty() {
            return Err(Error::NoRegressors);
        }
        let dropped: Vec<String> = (0..self.p())
            .filter(|j| !keep.contains(j))
            .map(|j| self.column_names[j].clone())
            .collect();
        let dropped_targets: Vec<String> = self
            .target_index
            .iter()
            .filter(|j| !keep.contains(j))
            .map(|&j| self.column_names[j].clone())
            .collect();
        if !dropped_targets.is_empty() {
            warn!("dropped constant target column(s): {}", dropped_targets.join(", "));
        }
        let targets: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter(|(_, j)| self.target_index.contains(j))
            .map(|(new, _)| new)
            .collect();
        if targets.is_empty() {
            return Err(Error::InvalidInput(format!(
                "every target column is constant: {}",
                dropped_targets.join(", ")
            )));
        }
        let x = self.x.select(Axis(1), &keep);
        let names = keep.iter().map(|&j| self.column_names[j].clone()).collect();
        let data = Self::with_outcome_name(self.y.clone(), x, names, targets, self.outcome_name.clone())?;
        Ok(ConstantDrop {
            data,
            dropped,
            dropped_targets,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_small_csv() {
        let text = "y,d1,x1\n1,2,3\n4,5,6.5\n7,8,9\n";
        let d = Dataset::read_csv(text.as_bytes(), "y", &TargetSpec::parse("d1")).unwrap();
        assert_eq!((d.n(), d.p(), d.k()), (3, 2, 1));
        assert_eq!(d.y(), &array![1.0, 4.0, 7.0]);
        assert_eq!(d.x()[[1, 1]], 6.5);
        assert_eq!(d.target_names(), vec!["d1"]);
    }

    #[test]
    fn prefix_pattern_selects_in_file_order() {
        let text = "y,fem,fem_x1,x1\n1,0,0,3\n2,1,2,2\n3,1,5,1\n";
        let d = Dataset::read_csv(text.as_bytes(), "y", &TargetSpec::parse("fem*")).unwrap();
        assert_eq!(d.target_names(), vec!["fem", "fem_x1"]);
        assert_eq!(d.target_index(), &[0, 1]);
    }

    #[test]
    fn blank_cell_names_row_and_column() {
        let text = "y,d1,x1\n1,2,3\n4,,6\n";
        let err = Dataset::read_csv(text.as_bytes(), "y", &TargetSpec::parse("d1")).unwrap_err();
        match err {
            Error::MissingValue { row, column } => {
                assert_eq!(row, 2);
                assert_eq!(column, "d1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_lookup_errors() {
        let text = "y,d1\n1,abc\n2,3\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), "y", &TargetSpec::parse("d1")),
            Err(Error::NonNumeric { row: 1, .. })
        ));
        let text = "y,d1\n1,2\n2,3\n";
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), "z", &TargetSpec::parse("d1")),
            Err(Error::OutcomeNotFound(_))
        ));
        assert!(matches!(
            Dataset::read_csv(text.as_bytes(), "y", &TargetSpec::parse("q*")),
            Err(Error::NoTargetMatch(_))
        ));
        assert!(matches!(
            Dataset::load_csv("/nonexistent/file.csv", "y", &TargetSpec::All),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn interactions_multiply_and_extend_targets() {
        let x = array![[0.0, 1.0, 2.0], [1.0, 3.0, 4.0], [1.0, 5.0, 7.0]];
        let d = Dataset::new(array![1.0, 2.0, 3.0], x, names(&["f", "x", "z"]), vec![0]).unwrap();
        let e = d.build_interactions("f", &names(&["x", "z"])).unwrap();
        assert_eq!(e.p(), 5);
        assert_eq!(e.column_names()[3], "f:x");
        assert_eq!(e.x().column(3).to_vec(), vec![0.0, 3.0, 5.0]);
        assert_eq!(e.target_index(), &[0, 3, 4]);
        assert!(matches!(
            e.build_interactions("f", &names(&["x"])),
            Err(Error::NameCollision(_))
        ));
    }

    #[test]
    fn zero_focal_yields_constant_columns() {
        let x = array![[0.0, 1.0], [0.0, 3.0], [0.0, 5.0]];
        let d = Dataset::new(array![1.0, 2.0, 3.0], x, names(&["f", "x"]), vec![1]).unwrap();
        let e = d.build_interactions("f", &names(&["x"])).unwrap();
        let dropped = e.drop_constants().unwrap();
        assert_eq!(dropped.dropped, vec!["f", "f:x"]);
        assert_eq!(dropped.data.p(), 1);
    }

    #[test]
    fn drop_constants_cases() {
        let x = array![[1.0, 2.0, 5.0], [1.0, 3.0, 6.0], [1.0, 4.0, 8.0]];
        let d = Dataset::new(array![1.0, 2.0, 3.0], x.clone(), names(&["c", "a", "b"]), vec![0, 2]).unwrap();
        assert!(d.standardization().is_err());
        let out = d.drop_constants().unwrap();
        assert_eq!(out.data.p(), 2);
        assert_eq!(out.dropped_targets, vec!["c"]);
        assert_eq!(out.data.target_names(), vec!["b"]);
        assert!(out.data.standardization().is_ok());

        let again = out.data.drop_constants().unwrap();
        assert_eq!(again.data, out.data);
        assert!(again.dropped.is_empty());

        let all_const = array![[1.0], [1.0], [1.0]];
        let d = Dataset::new(array![1.0, 2.0, 3.0], all_const, names(&["c"]), vec![0]).unwrap();
        assert!(matches!(d.drop_constants(), Err(Error::NoRegressors)));
    }

    #[test]
    fn rejects_invalid_construction() {
        let x = array![[1.0], [2.0]];
        assert!(Dataset::new(array![1.0], x.clone(), names(&["a"]), vec![0]).is_err());
        assert!(Dataset::new(array![1.0, f64::NAN], x.clone(), names(&["a"]), vec![0]).is_err());
        assert!(Dataset::new(array![1.0, 2.0], x.clone(), names(&["a"]), vec![1]).is_err());
        assert!(Dataset::new(array![1.0, 2.0], x, names(&["a"]), vec![]).is_err());
    }

    #[test]
    fn standardization_inverts() {
        let x = array![[1.0, 10.0], [2.0, -3.0], [4.0, 7.5], [8.0, 0.25]];
        let s = Standardization::fit(x.view(), &names(&["a", "b"])).unwrap();
        let z = s.apply(x.view());
        for j in 0..2 {
            let c = z.column(j);
            assert!(c.mean().unwrap().abs() < 1e-14);
            assert!(((c.dot(&c) / 4.0) - 1.0).abs() < 1e-14);
        }
        let back = s.invert(z.view());
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}
