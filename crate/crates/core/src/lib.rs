pub mod corpus;
pub mod explore;
pub mod frontend;
pub mod interp;
pub mod localize;
pub mod rank;
pub mod semantic;
pub mod templates;
