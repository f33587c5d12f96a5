pub mod accountant;
pub mod codec;
pub mod fedsim;
pub mod field;
pub mod lwe;
pub mod protocol;
pub mod sampler;
pub mod shamir;
