//! Key-value configuration for the vending controller.
//!
//! The file is TOML with dotted keys: `product.<name>.price` overrides a
//! unit price and `inventory.capacity` sets the per-product stock level.
//! Everything is optional; the defaults are the standard catalog at
//! capacity 4.
//!
//! ```toml
//! inventory.capacity = 4
//! product.snacks.price = 30
//! product.coffee.price = 40
//! ```

use crate::controller::{ControllerError, Product, ProductCatalog, ProductId};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unknown product `{0}` (known: snacks, coffee, cold_drink, candies)")]
    UnknownProduct(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    inventory: RawInventory,
    #[serde(default)]
    product: BTreeMap<String, RawProduct>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInventory {
    capacity: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProduct {
    price: Option<u32>,
}

/// Catalog and capacity the simulator should run with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub catalog: ProductCatalog,
    pub capacity: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            catalog: ProductCatalog::standard(),
            capacity: 4,
        }
    }
}

impl SimConfig {
    pub fn from_str(text: &str) -> Result<SimConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut products: Vec<Product> = ProductCatalog::standard().products().to_vec();
        for (name, overrides) in &raw.product {
            let id = ProductId::parse(name).ok_or_else(|| ConfigError::UnknownProduct(name.clone()))?;
            if let Some(price) = overrides.price {
                let slot = products
                    .iter_mut()
                    .find(|p| p.id == id)
                    .expect("standard catalog covers all known products");
                slot.price = price;
            }
        }
        Ok(SimConfig {
            catalog: ProductCatalog::new(products)?,
            capacity: raw.inventory.capacity.unwrap_or(4),
        })
    }

    pub fn load(path: &Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SimConfig::from_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_standard_machine() {
        let cfg = SimConfig::from_str("").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.catalog.price(ProductId::Coffee), Some(40));
        assert_eq!(cfg.capacity, 4);
    }

    #[test]
    fn dotted_keys_override_prices_and_capacity() {
        let cfg = SimConfig::from_str(
            "inventory.capacity = 2\nproduct.snacks.price = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.capacity, 2);
        assert_eq!(cfg.catalog.price(ProductId::Snacks), Some(50));
        assert_eq!(cfg.catalog.price(ProductId::Candies), Some(30));
    }

    #[test]
    fn unknown_products_are_rejected() {
        let err = SimConfig::from_str("product.sushi.price = 90\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownProduct(name) if name == "sushi"));
    }

    #[test]
    fn invalid_prices_are_rejected() {
        let err = SimConfig::from_str("product.snacks.price = 35\n").unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Controller(ControllerError::PriceNotMultipleOfTen { .. })
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(SimConfig::from_str("flavour = \"spicy\"\n").is_err());
        assert!(SimConfig::from_str("product.snacks.colour = \"red\"\n").is_err());
    }
}
