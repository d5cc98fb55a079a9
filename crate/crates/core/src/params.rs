//! Named parameter traversal shared by the optimizer, checkpoints and
//! gradient checks.

use crate::tensor::Tensor;

pub trait Parameters {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_params("", &mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, t| n += t.numel());
        n
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Parameters for Tensor {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(prefix, self)
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(prefix, self)
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, p) in self.iter().enumerate() {
            p.visit_params(&join(prefix, &i.to_string()), f);
        }
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_params_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

/// Implements [`Parameters`] for a struct by visiting the listed fields.
#[macro_export]
macro_rules! impl_parameters {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::params::Parameters for $ty {
            fn visit_params(
                &self,
                prefix: &str,
                f: &mut dyn FnMut(&str, &$crate::Tensor),
            ) {
                $( $crate::params::Parameters::visit_params(
                    &self.$field,
                    &$crate::params::join(prefix, stringify!($field)),
                    f,
                ); )*
            }
            fn visit_params_mut(
                &mut self,
                prefix: &str,
                f: &mut dyn FnMut(&str, &mut $crate::Tensor),
            ) {
                $( $crate::params::Parameters::visit_params_mut(
                    &mut self.$field,
                    &$crate::params::join(prefix, stringify!($field)),
                    f,
                ); )*
            }
        }
    };
}
