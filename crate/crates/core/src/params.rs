//! Keyed parameter blocks.
//!
//! Device records in case files carry their optional parameters as trailing
//! `key=value` pairs. Each block below knows its keys and defaults, so the
//! parser and the serializer share one table.

/// Declares a plain `f64` parameter struct together with its case-file keys
/// and default values.
macro_rules! keyed_params {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $( $(#[$fmeta:meta])* $field:ident : $key:literal = $default:expr ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name {
            $( $(#[$fmeta])* pub $field: f64 ),*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $( $field: $default ),* }
            }
        }

        impl $name {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            pub fn get(&self, key: &str) -> Option<f64> {
                match key {
                    $( $key => Some(self.$field), )*
                    _ => None,
                }
            }

            /// Sets `key`; returns `false` when the key does not belong here.
            pub fn set(&mut self, key: &str, value: f64) -> bool {
                match key {
                    $( $key => { self.$field = value; true } )*
                    _ => false,
                }
            }

            pub fn entries(&self) -> Vec<(&'static str, f64)> {
                vec![$( ($key, self.$field) ),*]
            }
        }
    };
}

pub(crate) use keyed_params;

#[cfg(test)]
mod tests {
    keyed_params! {
        pub struct Demo {
            alpha: "a" = 1.0,
            beta: "b" = 2.5,
        }
    }

    #[test]
    fn keyed_block_roundtrip() {
        let mut d = Demo::default();
        assert_eq!(d.get("b"), Some(2.5));
        assert!(d.set("a", 4.0));
        assert!(!d.set("zz", 4.0));
        assert_eq!(d.entries(), vec![("a", 4.0), ("b", 2.5)]);
        assert_eq!(Demo::KEYS, &["a", "b"]);
    }
}
