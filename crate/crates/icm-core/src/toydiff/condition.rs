//! Conditioning token sequences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scene::{Color, Shape};

/// Conditioning vocabulary. `Null` is the classifier-free-guidance
/// unconditional token and only ever appears alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Token {
    Obj,
    Red,
    Blue,
    Circle,
    Square,
    Null,
}

pub const VOCAB_SIZE: usize = 6;

impl Token {
    pub fn index(self) -> usize {
        match self {
            Token::Obj => 0,
            Token::Red => 1,
            Token::Blue => 2,
            Token::Circle => 3,
            Token::Square => 4,
            Token::Null => 5,
        }
    }

    pub fn color(self) -> Option<Color> {
        match self {
            Token::Red => Some(Color::Red),
            Token::Blue => Some(Color::Blue),
            _ => None,
        }
    }

    pub fn shape(self) -> Option<Shape> {
        match self {
            Token::Circle => Some(Shape::Circle),
            Token::Square => Some(Shape::Square),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConditionError {
    #[error("condition must contain 1..=3 tokens, got {0}")]
    BadLength(usize),
    #[error("NULL must be the sole token")]
    NullNotAlone,
    #[error("at most one color token allowed")]
    MultipleColors,
    #[error("at most one shape token allowed")]
    MultipleShapes,
}

/// A validated token sequence: at most one color and one shape token,
/// `NULL` only as the sole token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Token>", into = "Vec<Token>")]
pub struct Condition {
    tokens: Vec<Token>,
}

impl Condition {
    pub fn new(tokens: Vec<Token>) -> Result<Self, ConditionError> {
        if tokens.is_empty() || tokens.len() > 3 {
            return Err(ConditionError::BadLength(tokens.len()));
        }
        if tokens.contains(&Token::Null) && tokens.len() > 1 {
            return Err(ConditionError::NullNotAlone);
        }
        if tokens.iter().filter(|t| t.color().is_some()).count() > 1 {
            return Err(ConditionError::MultipleColors);
        }
        if tokens.iter().filter(|t| t.shape().is_some()).count() > 1 {
            return Err(ConditionError::MultipleShapes);
        }
        Ok(Condition { tokens })
    }

    /// The general prompt: `[OBJ]`.
    pub fn generic() -> Self {
        Condition {
            tokens: vec![Token::Obj],
        }
    }

    /// The unconditional branch: `[NULL]`.
    pub fn null() -> Self {
        Condition {
            tokens: vec![Token::Null],
        }
    }

    /// `[OBJ]` plus optional explicit color and/or shape tokens.
    pub fn with_attributes(color: Option<Color>, shape: Option<Shape>) -> Self {
        let mut tokens = vec![Token::Obj];
        if let Some(c) = color {
            tokens.push(match c {
                Color::Red => Token::Red,
                Color::Blue => Token::Blue,
            });
        }
        if let Some(s) = shape {
            tokens.push(match s {
                Shape::Circle => Token::Circle,
                Shape::Square => Token::Square,
            });
        }
        Condition { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_null(&self) -> bool {
        self.tokens == [Token::Null]
    }

    /// The color this condition pins down, if any.
    pub fn color(&self) -> Option<Color> {
        self.tokens.iter().find_map(|t| t.color())
    }

    /// The shape this condition pins down, if any.
    pub fn shape(&self) -> Option<Shape> {
        self.tokens.iter().find_map(|t| t.shape())
    }

    /// Generic in the sense of the localization setup: no attribute tokens.
    pub fn is_generic(&self) -> bool {
        self.color().is_none() && self.shape().is_none()
    }
}

impl TryFrom<Vec<Token>> for Condition {
    type Error = ConditionError;
    fn try_from(tokens: Vec<Token>) -> Result<Self, Self::Error> {
        Condition::new(tokens)
    }
}

impl From<Condition> for Vec<Token> {
    fn from(c: Condition) -> Vec<Token> {
        c.tokens
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<&str> = self
            .tokens
            .iter()
            .map(|t| match t {
                Token::Obj => "OBJ",
                Token::Red => "RED",
                Token::Blue => "BLUE",
                Token::Circle => "CIRCLE",
                Token::Square => "SQUARE",
                Token::Null => "NULL",
            })
            .collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_must_be_alone() {
        assert_eq!(
            Condition::new(vec![Token::Obj, Token::Null]).unwrap_err(),
            ConditionError::NullNotAlone
        );
        assert!(Condition::new(vec![Token::Null]).is_ok());
    }

    #[test]
    fn at_most_one_color_and_shape() {
        assert_eq!(
            Condition::new(vec![Token::Red, Token::Blue]).unwrap_err(),
            ConditionError::MultipleColors
        );
        assert_eq!(
            Condition::new(vec![Token::Circle, Token::Square]).unwrap_err(),
            ConditionError::MultipleShapes
        );
        assert!(Condition::new(vec![Token::Obj, Token::Red, Token::Circle]).is_ok());
    }

    #[test]
    fn length_bounds() {
        assert!(Condition::new(vec![]).is_err());
        assert!(
            Condition::new(vec![Token::Obj, Token::Red, Token::Circle, Token::Square]).is_err()
        );
    }

    #[test]
    fn attribute_queries() {
        let c = Condition::with_attributes(Some(Color::Blue), None);
        assert_eq!(c.color(), Some(Color::Blue));
        assert_eq!(c.shape(), None);
        assert!(!c.is_generic());
        assert!(Condition::generic().is_generic());
    }
}
