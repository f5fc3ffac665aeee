pub mod compare;
pub mod generate;
pub mod simulate;
pub mod stability;
pub mod sweep;
