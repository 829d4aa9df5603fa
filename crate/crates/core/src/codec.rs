//! Canonical JSON and base64 helpers shared by the storage and protocol
//! wire formats.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub(crate) fn b64_encode(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub(crate) fn b64_decode(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
    STANDARD.decode(text)
}

/// Serializes `value` as UTF-8 JSON with lexicographically sorted object keys
/// and no insignificant whitespace.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    // serde_json's Map is a BTreeMap (preserve_order is not enabled), so a
    // round trip through Value sorts every object's keys.
    let tree = serde_json::to_value(value)?;
    serde_json::to_vec(&tree)
}

pub fn from_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(bytes)
}

/// Implements `Serialize`/`Deserialize` as a base64 string for a byte newtype.
///
/// The type must provide `as_bytes(&self)` returning `&[u8]` or `Vec<u8>`, and
/// `try_from_slice(&[u8]) -> Result<Self, E>` with `E: Display`.
macro_rules! impl_base64_serde {
    ($ty:ty) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&$crate::codec::b64_encode(&*self.as_bytes()))
            }
        }

        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = <std::borrow::Cow<'de, str> as serde::Deserialize>::deserialize(d)?;
                let bytes = $crate::codec::b64_decode(&text).map_err(serde::de::Error::custom)?;
                <$ty>::try_from_slice(&bytes).map_err(serde::de::Error::custom)
            }
        }
    };
}

pub(crate) use impl_base64_serde;

/// serde `with` module for plain `Vec<u8>` fields.
pub(crate) mod base64_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::b64_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = std::borrow::Cow::<'de, str>::deserialize(d)?;
        super::b64_decode(&text).map_err(serde::de::Error::custom)
    }
}
