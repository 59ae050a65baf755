//! Prompt classes.
//!
//! Prompts are short strings. `class:<n>` names a class directly; any other
//! text is hashed onto one of the available classes.

use serde::{Deserialize, Serialize};

/// Index of a prompt class in the conditioning table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptClass(pub usize);

impl PromptClass {
    /// Maps prompt text onto one of `num_classes` classes.
    pub fn from_text(text: &str, num_classes: usize) -> PromptClass {
        let n = num_classes.max(1);
        if let Some(idx) = text
            .trim()
            .strip_prefix("class:")
            .and_then(|s| s.parse::<usize>().ok())
        {
            return PromptClass(idx % n);
        }
        PromptClass((fnv1a(text.as_bytes()) % n as u64) as usize)
    }

    pub fn to_text(self) -> String {
        format!("class:{}", self.0)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_class_labels() {
        assert_eq!(PromptClass::from_text("class:3", 8), PromptClass(3));
        assert_eq!(PromptClass::from_text("class:11", 8), PromptClass(3));
        assert_eq!(PromptClass(5).to_text(), "class:5");
    }

    #[test]
    fn free_text_is_stable() {
        let a = PromptClass::from_text("a cheetah running on grass", 4);
        let b = PromptClass::from_text("a cheetah running on grass", 4);
        assert_eq!(a, b);
        assert!(a.0 < 4);
    }
}
