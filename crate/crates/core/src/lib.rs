pub mod audit;
pub mod cli;
pub mod compress;
pub mod disarchive;
pub mod heritage;
pub mod http;
pub mod nar;
pub mod resolver;
pub mod sexpr;
pub mod swhid;
pub mod tar;
