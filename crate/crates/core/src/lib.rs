//! Multiparty authorization for encrypted storage.

pub mod bigdec;
pub mod digest;
pub mod prng;
pub mod fbsc;
pub mod secretshare;
pub mod rsacrt;
pub mod acl;
pub mod statsuite;
pub mod pgm;
pub mod protocol;
