//! BitML contracts: parsing, static checks, verification and compilation to
//! Bitcoin transactions.

pub mod ast;
pub mod compiler;
pub mod hash;
pub mod parser;
pub mod semantics;
pub mod txwire;
pub mod verifier;
