//! Second-order-cone forms of a quadratic budget `Σ_k ‖u_k‖² ≤ l_max`.

use crate::program::{LinExpr, ProgramBuilder};

/// How the budget is written as cones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetForm {
    /// One rotated cone `‖u_k‖² ≤ τ_k` per step plus `Σ τ_k ≤ l_max`.
    Epigraph,
    /// A single cone `‖(u_1, …, u_N)‖ ≤ √l_max`.
    Stacked,
}

/// Quadratic budget over blocks of decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadBudget {
    /// Variable indices of each `u_k`.
    pub blocks: Vec<Vec<usize>>,
    pub l_max: f64,
    pub form: BudgetForm,
}

impl QuadBudget {
    pub fn new(blocks: Vec<Vec<usize>>, l_max: f64, form: BudgetForm) -> Self {
        QuadBudget { blocks, l_max, form }
    }

    /// Adds the cone rows to `b`.  The epigraph form also adds variables named
    /// `name`; their index range is returned.
    pub fn emit(&self, b: &mut ProgramBuilder, name: &str) -> std::ops::Range<usize> {
        self.emit_with_offset(b, name, &[])
    }

    /// As [`emit`](Self::emit), with the right-hand side `l_max − Σ offset`
    /// where `offset` holds extra linear cost terms (e.g. already spent cost
    /// represented by other epigraph variables).
    pub fn emit_with_offset(
        &self,
        b: &mut ProgramBuilder,
        name: &str,
        offset: &[usize],
    ) -> std::ops::Range<usize> {
        let l_max = self.l_max.max(0.0);
        match self.form {
            BudgetForm::Epigraph => {
                let t = b.add_vars(name, self.blocks.len());
                let mut sum = LinExpr::constant(l_max);
                for (k, blk) in self.blocks.iter().enumerate() {
                    let tk = t.start + k;
                    b.rotated_soc(
                        LinExpr::var(tk),
                        LinExpr::constant(1.0),
                        blk.iter().map(|&v| LinExpr::var(v)).collect(),
                    );
                    sum.push(tk, -1.0);
                }
                for &v in offset {
                    sum.push(v, -1.0);
                }
                b.nonneg(sum);
                t
            }
            BudgetForm::Stacked => {
                let mut rows = vec![LinExpr::constant(l_max.sqrt())];
                rows.extend(self.blocks.iter().flatten().map(|&v| LinExpr::var(v)));
                b.soc(rows);
                let at = b.num_vars();
                at..at
            }
        }
    }

    /// Direct evaluation of `Σ ‖u_k‖² ≤ l_max`.
    pub fn contains(&self, u: &[Vec<f64>]) -> bool {
        let total: f64 = u.iter().map(|uk| uk.iter().map(|v| v * v).sum::<f64>()).sum();
        total <= self.l_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{check_feasible, Settings};

    fn probe(form: BudgetForm, u: &[f64], l_max: f64) -> bool {
        let mut b = ProgramBuilder::new();
        let x = b.add_vars("u", u.len());
        for (i, &v) in u.iter().enumerate() {
            b.eq(LinExpr::var(x.start + i).add_const(-v));
        }
        QuadBudget::new(vec![(0..u.len()).collect()], l_max, form).emit(&mut b, "tau");
        check_feasible(&b.build().unwrap(), &Settings::default()).unwrap().is_feasible()
    }

    #[test]
    fn zero_budget_forces_zero_input() {
        for form in [BudgetForm::Epigraph, BudgetForm::Stacked] {
            assert!(!probe(form, &[0.1, 0.0, 0.0], 0.0));
        }
    }

    #[test]
    fn boundary_at_three() {
        for form in [BudgetForm::Epigraph, BudgetForm::Stacked] {
            assert!(probe(form, &[2.9, 0.0, 0.0], 9.0));
            assert!(!probe(form, &[3.1, 0.0, 0.0], 9.0));
            assert!(!probe(form, &[2.0, 2.0, 1.5], 9.0));
        }
    }
}
