use blake2::digest::consts::U32;
use blake2::{Blake2b, Digest};

/// Hex-encoded BLAKE2b-256 of the UTF-8 bytes of `text`.
pub fn content_digest(text: &str) -> String {
    hex::encode(Blake2b::<U32>::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::content_digest;

    #[test]
    fn blake2b_256_known_vector() {
        // BLAKE2b-256("abc")
        assert_eq!(
            content_digest("abc"),
            "bddd813c634239723171ef3fee98579b94964e3bb1cb3e427262c8c068d52319"
        );
        assert_eq!(content_digest("").len(), 64);
    }
}
