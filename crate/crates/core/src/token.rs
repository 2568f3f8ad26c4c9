//! Compact signed bearer tokens: `base64url(header).base64url(claims).base64url(mac)`
//! with HMAC-SHA256 under a single gateway key. Verification is offline.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

const HEADER: &str = r#"{"alg":"HS256","typ":"JWT"}"#;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("malformed token")]
    Malformed,
    #[error("bad token signature")]
    BadSignature,
    #[error("token expired at {exp}")]
    Expired { exp: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Parent,
    Provider,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthToken {
    pub sub: String,
    pub role: Role,
    /// Expiry, unix seconds.
    pub exp: u64,
}

#[derive(Clone)]
pub struct TokenKey([u8; 32]);

impl TokenKey {
    pub fn new(key: [u8; 32]) -> Self {
        TokenKey(key)
    }

    fn mac(&self, signing_input: &[u8]) -> Hmac<Sha256> {
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&self.0).expect("hmac accepts any key length");
        mac.update(signing_input);
        mac
    }

    pub fn sign(&self, token: &AuthToken) -> String {
        let claims = serde_json::to_vec(token).expect("claims serialize");
        let input = format!("{}.{}", URL_SAFE_NO_PAD.encode(HEADER), URL_SAFE_NO_PAD.encode(claims));
        let sig = self.mac(input.as_bytes()).finalize().into_bytes();
        format!("{input}.{}", URL_SAFE_NO_PAD.encode(sig))
    }

    /// Check MAC, then expiry against `now_s`.
    pub fn verify(&self, token: &str, now_s: u64) -> Result<AuthToken, TokenError> {
        let mut parts = token.trim().split('.');
        let (Some(h), Some(c), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(TokenError::Malformed);
        };
        let sig = URL_SAFE_NO_PAD.decode(s).map_err(|_| TokenError::Malformed)?;
        let input_len = h.len() + 1 + c.len();
        self.mac(&token.trim().as_bytes()[..input_len]).verify_slice(&sig).map_err(|_| TokenError::BadSignature)?;
        let header = URL_SAFE_NO_PAD.decode(h).map_err(|_| TokenError::Malformed)?;
        if header != HEADER.as_bytes() {
            return Err(TokenError::Malformed);
        }
        let claims = URL_SAFE_NO_PAD.decode(c).map_err(|_| TokenError::Malformed)?;
        let tok: AuthToken = serde_json::from_slice(&claims).map_err(|_| TokenError::Malformed)?;
        if tok.exp <= now_s {
            return Err(TokenError::Expired { exp: tok.exp });
        }
        Ok(tok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> TokenKey {
        TokenKey::new([4; 32])
    }

    fn provider(exp: u64) -> AuthToken {
        AuthToken { sub: "nurse-1".into(), role: Role::Provider, exp }
    }

    #[test]
    fn fresh_token_verifies() {
        let t = key().sign(&provider(2_000));
        assert_eq!(key().verify(&t, 1_000).unwrap(), provider(2_000));
    }

    #[test]
    fn expired_token() {
        let t = key().sign(&provider(2_000));
        assert_eq!(key().verify(&t, 2_000), Err(TokenError::Expired { exp: 2_000 }));
    }

    #[test]
    fn flipped_signature_bit() {
        let t = key().sign(&provider(2_000));
        let (input, sig) = t.rsplit_once('.').unwrap();
        let mut raw = URL_SAFE_NO_PAD.decode(sig).unwrap();
        raw[5] ^= 0x10;
        let forged = format!("{input}.{}", URL_SAFE_NO_PAD.encode(raw));
        assert_eq!(key().verify(&forged, 1_000), Err(TokenError::BadSignature));
        assert_eq!(TokenKey::new([5; 32]).verify(&t, 1_000), Err(TokenError::BadSignature));
    }

    #[test]
    fn malformed_tokens() {
        for t in ["", "a.b", "a.b.c.d", "!!.??.##"] {
            assert_eq!(key().verify(t, 0), Err(TokenError::Malformed), "{t}");
        }
    }

    #[test]
    fn tampered_claims_fail_signature() {
        let t = key().sign(&AuthToken { sub: "mum".into(), role: Role::Parent, exp: 5_000 });
        let parts: Vec<&str> = t.split('.').collect();
        let claims = URL_SAFE_NO_PAD.encode(br#"{"sub":"mum","role":"provider","exp":5000}"#);
        let forged = format!("{}.{}.{}", parts[0], claims, parts[2]);
        assert_eq!(key().verify(&forged, 0), Err(TokenError::BadSignature));
    }
}
