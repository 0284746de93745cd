//! Text normalization shared by state identities, attribute keys, and the
//! embedding cache.
//!
//! Two forms exist. The *display* form (NFC, trimmed, internal whitespace
//! collapsed) keeps the original casing so backend text stays faithful when
//! echoed back to an operator. The *equality* form additionally case-folds
//! and is the only form used for comparisons and cache keys.

use unicode_normalization::UnicodeNormalization;

/// Display normalization: Unicode NFC, trim, collapse runs of whitespace to
/// a single ASCII space. Casing is preserved.
pub fn display(text: &str) -> String {
    let composed: String = text.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    let mut pending_space = false;
    for ch in composed.trim().chars() {
        if ch.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        }
    }
    out
}

/// Equality normalization: the display form, case-folded. A final NFC pass
/// keeps the result stable under repeated application (lowercasing can
/// introduce decomposed sequences for a handful of code points).
pub fn equality(text: &str) -> String {
    display(text).to_lowercase().nfc().collect()
}

/// True when two texts are equal under the equality form.
pub fn eq(a: &str, b: &str) -> bool {
    equality(a) == equality(b)
}

/// True when the text normalizes to nothing.
pub fn is_blank(text: &str) -> bool {
    display(text).is_empty()
}
