//! The primitive annotations and pipeline templates shipped with the crate.

use crate::annotations::{Catalog, CatalogError, LoadOptions};
use crate::primitives::NativeRegistry;

/// `(file name, contents)` of every bundled primitive annotation.
pub const PRIMITIVES: &[(&str, &str)] = &[
    ("CategoricalEncoder.json", include_str!("../catalog/primitives/CategoricalEncoder.json")),
    ("ClassDecoder.json", include_str!("../catalog/primitives/ClassDecoder.json")),
    ("ClassEncoder.json", include_str!("../catalog/primitives/ClassEncoder.json")),
    ("DecisionTreeClassifier.json", include_str!("../catalog/primitives/DecisionTreeClassifier.json")),
    ("DecisionTreeRegressor.json", include_str!("../catalog/primitives/DecisionTreeRegressor.json")),
    ("GradientBoostingClassifier.json", include_str!("../catalog/primitives/GradientBoostingClassifier.json")),
    ("GradientBoostingRegressor.json", include_str!("../catalog/primitives/GradientBoostingRegressor.json")),
    ("KNNClassifier.json", include_str!("../catalog/primitives/KNNClassifier.json")),
    ("LinearRegressionGD.json", include_str!("../catalog/primitives/LinearRegressionGD.json")),
    ("LogisticRegressionGD.json", include_str!("../catalog/primitives/LogisticRegressionGD.json")),
    ("MinMaxScaler.json", include_str!("../catalog/primitives/MinMaxScaler.json")),
    ("RandomForestClassifier.json", include_str!("../catalog/primitives/RandomForestClassifier.json")),
    ("RandomForestRegressor.json", include_str!("../catalog/primitives/RandomForestRegressor.json")),
    ("SimpleImputer.json", include_str!("../catalog/primitives/SimpleImputer.json")),
    ("StandardScaler.json", include_str!("../catalog/primitives/StandardScaler.json")),
    ("TableToMatrix.json", include_str!("../catalog/primitives/TableToMatrix.json")),
    ("UniqueCounter.json", include_str!("../catalog/primitives/UniqueCounter.json")),
];

/// `(file name, contents)` of every bundled pipeline template.
pub const TEMPLATES: &[(&str, &str)] = &[
    ("classification.forest.json", include_str!("../catalog/templates/classification.forest.json")),
    ("classification.gbt.json", include_str!("../catalog/templates/classification.gbt.json")),
    ("classification.knn.json", include_str!("../catalog/templates/classification.knn.json")),
    ("classification.logistic.json", include_str!("../catalog/templates/classification.logistic.json")),
    ("classification.tree.json", include_str!("../catalog/templates/classification.tree.json")),
    ("regression.forest.json", include_str!("../catalog/templates/regression.forest.json")),
    ("regression.gbt.json", include_str!("../catalog/templates/regression.gbt.json")),
    ("regression.linear.json", include_str!("../catalog/templates/regression.linear.json")),
    ("regression.tree.json", include_str!("../catalog/templates/regression.tree.json")),
];

/// Origin label recorded for bundled files.
pub fn origin(file: &str) -> String {
    format!("bundled:{file}")
}

/// Adds every bundled annotation to `catalog`.
pub fn load_into(catalog: &mut Catalog, registry: &NativeRegistry) -> Result<(), CatalogError> {
    for (file, text) in PRIMITIVES {
        catalog.add_document(text, &origin(file), registry, LoadOptions::default())?;
    }
    Ok(())
}

/// The bundled annotations as a catalog of their own.
pub fn catalog(registry: &NativeRegistry) -> Result<Catalog, CatalogError> {
    let mut c = Catalog::new();
    load_into(&mut c, registry)?;
    Ok(c)
}
