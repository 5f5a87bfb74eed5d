//! Sudoku completion from givens, with a free logits tensor as the model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_task_program, BindingRow, Example, MetricKind, TaskError, TaskInstance, VarSpec};
use crate::lang::BindingValue;
use crate::train::HeadSpec;

/// Initial logits are uniform in ±this.
const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SudokuPuzzle {
    pub size: usize,
    /// Values `1..=size`, row-major.
    pub solution: Vec<Vec<u8>>,
    /// `(row, col, value)` of the revealed cells.
    pub givens: Vec<(usize, usize, u8)>,
}

fn block_shape(size: usize) -> Result<(usize, usize), TaskError> {
    match size {
        6 => Ok((2, 3)),
        9 => Ok((3, 3)),
        4 => Ok((2, 2)),
        _ => Err(TaskError::Invalid(format!("unsupported Sudoku size {size}; use 6 or 9"))),
    }
}

pub fn sudoku_program_text(size: usize) -> Result<String, TaskError> {
    let (br, bc) = block_shape(size)?;
    let n = size - 1;
    let per_row = size / bc;
    Ok(format!(
        "domain R = 0..{n};
domain C = 0..{n};
domain V = 1..{size};
domain B = 0..{n};
domain I = 0..{n};
pred cell(R, C, V) categorical;
constraint row: forall r in R, v in V: exactly(1){{cell(r, c, v) for c in C}};
constraint col: forall c in C, v in V: exactly(1){{cell(r, c, v) for r in R}};
constraint block: forall b in B, v in V: exactly(1){{cell({br} * (b / {per_row}) + i / {bc}, {bc} * (b % {per_row}) + i % {bc}, v) for i in I}};
free gr in R;
free gc in C;
free gv in V;
constraint given: cell(gr, gc, gv);
"
    ))
}

fn ok_at(grid: &[Vec<u8>], r: usize, c: usize, v: u8, br: usize, bc: usize) -> bool {
    let n = grid.len();
    if (0..n).any(|k| grid[r][k] == v || grid[k][c] == v) {
        return false;
    }
    let (r0, c0) = (r / br * br, c / bc * bc);
    !(r0..r0 + br).any(|i| (c0..c0 + bc).any(|j| grid[i][j] == v))
}

fn fill<R: Rng>(grid: &mut Vec<Vec<u8>>, pos: usize, br: usize, bc: usize, rng: &mut R) -> bool {
    let n = grid.len();
    if pos == n * n {
        return true;
    }
    let (r, c) = (pos / n, pos % n);
    let mut vals: Vec<u8> = (1..=n as u8).collect();
    vals.shuffle(rng);
    for v in vals {
        if ok_at(grid, r, c, v, br, bc) {
            grid[r][c] = v;
            if fill(grid, pos + 1, br, bc, rng) {
                return true;
            }
            grid[r][c] = 0;
        }
    }
    false
}

/// A complete valid grid by randomized backtracking.
pub fn valid_grid<R: Rng>(size: usize, rng: &mut R) -> Result<Vec<Vec<u8>>, TaskError> {
    let (br, bc) = block_shape(size)?;
    let mut grid = vec![vec![0u8; size]; size];
    let done = fill(&mut grid, 0, br, bc, rng);
    debug_assert!(done, "an empty grid always completes");
    Ok(grid)
}

/// A `size`×`size` puzzle revealing `n_givens` cells of a random valid
/// grid, chosen uniformly. Train, dev, and test all hold the one puzzle.
pub fn gen_sudoku(size: usize, n_givens: usize, seed: u64) -> Result<TaskInstance, TaskError> {
    let text = sudoku_program_text(size)?;
    if n_givens > size * size {
        return Err(TaskError::Invalid(format!(
            "{n_givens} givens exceed the {} cells",
            size * size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solution = valid_grid(size, &mut rng)?;
    let mut cells: Vec<usize> = (0..size * size).collect();
    cells.shuffle(&mut rng);
    let mut shown = vec![false; size * size];
    for &c in &cells[..n_givens] {
        shown[c] = true;
    }
    let int = |i: usize| BindingValue::Int(i as i64);
    let mut vars = Vec::with_capacity(size * size);
    let mut bindings = Vec::with_capacity(n_givens);
    for r in 0..size {
        for c in 0..size {
            let v = solution[r][c] as usize;
            let given = shown[r * size + c];
            vars.push(VarSpec {
                pred: "cell".into(),
                args: vec![r as i64, c as i64],
                head: 0,
                col: (r * size + c) * size,
                label: Some(v - 1),
                supervised: given,
            });
            if given {
                bindings.push(BindingRow::new("given", [("gr", int(r)), ("gc", int(c)), ("gv", int(v))]));
            }
        }
    }
    let ex = Example {
        inputs: Vec::new(),
        vars,
        bindings,
        stratum: None,
    };
    let head = HeadSpec::Logits {
        n: size * size * size,
        scale: INIT_SCALE,
    };
    let name = format!("sudoku{size}");
    Ok(TaskInstance {
        program: parse_task_program(&name, &text),
        name,
        program_text: text,
        train: vec![ex.clone()],
        dev: vec![ex.clone()],
        test: vec![ex],
        inputs: Vec::new(),
        row_bindings: Default::default(),
        simple: vec![head.clone()],
        strong: vec![head],
        metric: MetricKind::ConstraintSatisfaction,
        readouts: Vec::new(),
        transitions: None,
        metric_excludes: vec!["given".into()],
    })
}

impl SudokuPuzzle {
    pub fn from_task(task: &TaskInstance) -> Option<SudokuPuzzle> {
        let ex = task.test.first()?;
        let size = (ex.vars.len() as f64).sqrt().round() as usize;
        let mut solution = vec![vec![0u8; size]; size];
        let mut givens = Vec::new();
        for v in &ex.vars {
            let (r, c) = (v.args[0] as usize, v.args[1] as usize);
            let val = v.label? as u8 + 1;
            solution[r][c] = val;
            if v.supervised {
                givens.push((r, c, val));
            }
        }
        Some(SudokuPuzzle { size, solution, givens })
    }
}
