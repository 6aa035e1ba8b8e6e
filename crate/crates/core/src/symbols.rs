//! Interned UTF-8 symbol tables.
//!
//! Id 0 is always epsilon. N-gram models additionally reserve the sentence
//! boundary and unknown-word symbols at fixed ids so that every model built
//! in this crate agrees on them.

use std::collections::HashMap;
use std::fmt;

/// Index into a [`SymbolTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

impl TokenId {
    pub const EPSILON: TokenId = TokenId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const EPSILON_SYMBOL: &str = "<eps>";
pub const BOS_SYMBOL: &str = "<s>";
pub const EOS_SYMBOL: &str = "</s>";
pub const UNK_SYMBOL: &str = "<unk>";

#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl SymbolTable {
    /// A table holding only epsilon.
    pub fn new() -> Self {
        let mut table = SymbolTable::default();
        table.intern(EPSILON_SYMBOL);
        table
    }

    /// A table holding epsilon, `<s>`, `</s>` and `<unk>` at ids 0..=3.
    pub fn with_reserved() -> Self {
        let mut table = SymbolTable::new();
        table.intern(BOS_SYMBOL);
        table.intern(EOS_SYMBOL);
        table.intern(UNK_SYMBOL);
        table
    }

    pub fn intern(&mut self, symbol: &str) -> TokenId {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = TokenId(self.symbols.len() as u32);
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), id);
        id
    }

    pub fn get(&self, symbol: &str) -> Option<TokenId> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (TokenId(i as u32), s.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let t = SymbolTable::with_reserved();
        assert_eq!(t.get(EPSILON_SYMBOL), Some(TokenId::EPSILON));
        assert_eq!(t.get(BOS_SYMBOL), Some(TokenId(1)));
        assert_eq!(t.get(EOS_SYMBOL), Some(TokenId(2)));
        assert_eq!(t.get(UNK_SYMBOL), Some(TokenId(3)));
    }

    #[test]
    fn interning_is_idempotent() {
        let mut t = SymbolTable::new();
        let a = t.intern("孙悟空");
        let b = t.intern("孙悟空");
        assert_eq!(a, b);
        assert_eq!(t.symbol(a), Some("孙悟空"));
        assert_eq!(t.len(), 2);
    }
}
