#[path = "support/properties.rs"]
mod properties;

macro_rules! suite_tests {
    ($($name:ident),*) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = properties::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

suite_tests!(geometry, features, registration, localmap, compensation, eval);
