use crate::eval::EvalError;

/// LIFO store backing `tape<int>` / `tape<double>` variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tape<T> {
    elems: Vec<T>,
}

impl<T: Copy> Tape<T> {
    pub fn new() -> Self {
        Tape { elems: Vec::new() }
    }

    /// Stores `v` and hands it back, so a push can sit inside an expression.
    #[inline]
    pub fn push(&mut self, v: T) -> T {
        self.elems.push(v);
        v
    }

    #[inline]
    pub fn pop(&mut self) -> Result<T, EvalError> {
        self.elems.pop().ok_or(EvalError::PopOnEmpty)
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn clear(&mut self) {
        self.elems.clear();
    }
}
