//! Built-in arithmetic and comparison functions. A call resolves to an
//! intrinsic when the module has no function of that name, or declares one
//! without a body.

use crate::il::Type;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intrinsic {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
}

impl Intrinsic {
    pub const ALL: [Intrinsic; 5] =
        [Intrinsic::Add, Intrinsic::Sub, Intrinsic::Mul, Intrinsic::Eq, Intrinsic::Lt];

    pub fn from_name(name: &str) -> Option<Intrinsic> {
        Some(match name {
            "add" => Intrinsic::Add,
            "sub" => Intrinsic::Sub,
            "mul" => Intrinsic::Mul,
            "eq" => Intrinsic::Eq,
            "lt" => Intrinsic::Lt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Add => "add",
            Intrinsic::Sub => "sub",
            Intrinsic::Mul => "mul",
            Intrinsic::Eq => "eq",
            Intrinsic::Lt => "lt",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, Intrinsic::Eq | Intrinsic::Lt)
    }

    /// Result type for two operands of type `operand`, which must be `I32`
    /// or `F32`.
    pub fn result_type(self, operand: &Type) -> Option<Type> {
        if !matches!(operand, Type::I32 | Type::F32) {
            return None;
        }
        Some(if self.is_comparison() { Type::Bool } else { operand.clone() })
    }
}
