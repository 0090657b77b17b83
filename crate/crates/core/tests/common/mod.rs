pub mod lqg;
pub mod nposs;
