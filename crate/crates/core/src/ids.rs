//! String interning for medallion and hack-license identifiers.

use std::collections::HashMap;

/// Handle to an interned identifier. Only meaningful together with the
/// [`SymbolTable`] that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Symbol(pub u32);

#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    names: Vec<Box<str>>,
    index: HashMap<Box<[u8]>, Symbol>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_bytes(&mut self, raw: &[u8]) -> Symbol {
        if let Some(&s) = self.index.get(raw) {
            return s;
        }
        let sym = Symbol(self.names.len() as u32);
        self.names.push(String::from_utf8_lossy(raw).into());
        self.index.insert(raw.into(), sym);
        sym
    }

    pub fn intern(&mut self, name: &str) -> Symbol {
        self.intern_bytes(name.as_bytes())
    }

    pub fn get(&self, name: &str) -> Option<Symbol> {
        self.index.get(name.as_bytes()).copied()
    }

    pub fn resolve(&self, sym: Symbol) -> &str {
        &self.names[sym.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Interns every name of `other` into `self`, returning the translation
    /// from `other`'s symbols to ours.
    pub fn absorb(&mut self, other: &SymbolTable) -> Vec<Symbol> {
        other.names.iter().map(|n| self.intern(n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_stable() {
        let mut t = SymbolTable::new();
        let a = t.intern("H1");
        let b = t.intern("H2");
        assert_eq!(t.intern("H1"), a);
        assert_ne!(a, b);
        assert_eq!(t.resolve(b), "H2");

        let mut local = SymbolTable::new();
        local.intern("H2");
        local.intern("H3");
        let map = t.absorb(&local);
        assert_eq!(map, vec![b, Symbol(2)]);
    }
}
