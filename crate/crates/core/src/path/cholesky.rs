//! Lower-triangular Cholesky factor of an active-set Gram matrix that grows
//! by one column on entry and shrinks on deletion.

/// `G = L·Lᵀ`, with `L` stored row-packed (row `i` holds `i + 1` entries).
#[derive(Debug, Clone, Default)]
pub struct GramCholesky {
    rows: Vec<Vec<f64>>,
}

impl GramCholesky {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a variable given its inner products with the current active
    /// columns (`cross`) and its squared norm. Returns `false`, leaving the
    /// factor unchanged, when the new pivot squared falls below `tol`.
    pub fn push(&mut self, cross: &[f64], self_dot: f64, tol: f64) -> bool {
        debug_assert_eq!(cross.len(), self.len());
        let z = self.forward(cross);
        let pivot_sq = self_dot - z.iter().map(|v| v * v).sum::<f64>();
        if !(pivot_sq > tol) {
            return false;
        }
        let mut row = z;
        row.push(pivot_sq.sqrt());
        self.rows.push(row);
        true
    }

    /// Removes the variable at position `k`, restoring triangularity with
    /// Givens rotations.
    pub fn remove(&mut self, k: usize) {
        let m = self.len();
        assert!(k < m);
        self.rows.remove(k);
        // Rows k.. now have one surplus column at position k..; rotate it out.
        for i in k..m - 1 {
            let a = self.rows[i][i];
            let b = self.rows[i][i + 1];
            let r = a.hypot(b);
            let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (a / r, b / r) };
            for row in self.rows[i..].iter_mut() {
                let x = row[i];
                let y = row[i + 1];
                row[i] = c * x + s * y;
                row[i + 1] = -s * x + c * y;
            }
            self.rows[i].truncate(i + 1);
            if self.rows[i][i] < 0.0 {
                for row in self.rows[i..].iter_mut() {
                    row[i] = -row[i];
                }
            }
        }
    }

    /// Solves `L·z = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&z).map(|(l, v)| l * v).sum();
            z.push((b[i] - s) / row[i]);
        }
        z
    }

    /// Solves `Lᵀ·x = z`.
    pub fn backward(&self, z: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut x = z.to_vec();
        for i in (0..m).rev() {
            x[i] /= self.rows[i][i];
            let xi = x[i];
            for (j, l) in self.rows[i][..i].iter().enumerate() {
                x[j] -= l * xi;
            }
        }
        x
    }

    /// Solves `G·x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }
}
