#pragma once

// Built-in copy of data/taxonomy/*.tsv (42 labels, 19 meta-categories).
// tests/taxonomy_test.cpp checks that the two stay identical.

#include <sstream>
#include <string>
#include <string_view>

#include "notetag/taxonomy.hpp"

namespace notetag {

inline constexpr std::string_view kDefaultLabelsTsv = R"tsv(# 41 top-level disease codes followed by the SPURIOUS sentinel; row order defines label ids.
DISORDER_OF_LABOR_DELIVERY	Disorder of labor / delivery (disorder)
DISORDER_OF_PREGNANCY	Disorder of pregnancy (disorder)
DISORDER_OF_THE_GENITOURINARY_SYSTEM	Disorder of the genitourinary system (disorder)
DISORDER_OF_CONNECTIVE_TISSUE	Disorder of connective tissue (disorder)
DISORDER_OF_MUSCULOSKELETAL_SYSTEM	Disorder of musculoskeletal system (disorder)
ANGIOEDEMA_AND_OR_URTICARIA	Angioedema and/or urticaria (disorder)
DISORDER_OF_PIGMENTATION	Disorder of pigmentation (disorder)
DISORDER_OF_INTEGUMENT	Disorder of integument (disorder)
DISORDER_OF_FETUS_OR_NEWBORN	Disorder of fetus or newborn (disorder)
HEREDITARY_DISEASE	Hereditary disease (disorder)
CONGENITAL_DISEASE	Congenital disease (disorder)
POISONING	Poisoning (disorder)
TRAUMATIC_AND_OR_NON_TRAUMATIC_INJURY	Traumatic AND/OR non-traumatic injury (disorder)
HYPERPROTEINEMIA	Hyperproteinemia (disorder)
NEOPLASM_AND_OR_HAMARTOMA	Neoplasm and/or hamartoma (disorder)
DISEASE_CAUSED_BY_ARTHROPOD	Disease caused by Arthropod (disorder)
DISEASE_CAUSED_BY_ANNELIDA	Disease caused by Annelida (disorder)
INFECTIOUS_DISEASE	Infectious disease (disorder)
DISEASE_CAUSED_BY_PARASITE	Disease caused by parasite (disorder)
ANEMIA	Anemia (disorder)
DISORDER_OF_CELLULAR_COMPONENT_OF_BLOOD	Disorder of cellular component of blood (disorder)
DISORDER_OF_HEMATOPOIETIC_CELL_PROLIFERATION	Disorder of hematopoietic cell proliferation (disorder)
DISORDER_OF_HEMOSTATIC_SYSTEM	Disorder of hemostatic system (disorder)
SPONTANEOUS_HEMORRHAGE	Spontaneous hemorrhage (disorder)
AUTOIMMUNE_DISEASE	Autoimmune disease (disorder)
DISORDER_OF_IMMUNE_FUNCTION	Disorder of immune function (disorder)
HYPERSENSITIVITY_CONDITION	Hypersensitivity condition (disorder)
METABOLIC_DISEASE	Metabolic disease (disorder)
NUTRITIONAL_DISORDER	Nutritional disorder (disorder)
OBESITY	Obesity (disorder)
PROPENSITY_TO_ADVERSE_REACTIONS	Propensity to adverse reactions (disorder)
DISORDER_OF_ENDOCRINE_SYSTEM	Disorder of endocrine system (disorder)
DISORDER_OF_NERVOUS_SYSTEM	Disorder of nervous system (disorder)
FELINE_HYPERESTHESIA_SYNDROME	Feline hyperesthesia syndrome (disorder)
MENTAL_DISORDER	Mental disorder (disorder)
DISORDER_OF_CARDIOVASCULAR_SYSTEM	Disorder of cardiovascular system (disorder)
DISORDER_OF_AUDITORY_SYSTEM	Disorder of auditory system (disorder)
VISUAL_SYSTEM_DISORDER	Visual system disorder (disorder)
VOMITING	Vomiting (disorder)
DISORDER_OF_DIGESTIVE_SYSTEM	Disorder of digestive system (disorder)
DISORDER_OF_RESPIRATORY_SYSTEM	Disorder of respiratory system (disorder)
SPURIOUS	spurious
)tsv";

inline constexpr std::string_view kDefaultGroupingTsv = R"tsv(# cluster_index	code	meta-category name
# 'Feline hyperesthesia syndrome' sits next to 'Diseases of the nervous system' but is kept
# as its own cluster (13 and 14), which gives 19 clusters in total.
1	DISORDER_OF_LABOR_DELIVERY	Complications of pregnancy, childbirth, and the puerperium
1	DISORDER_OF_PREGNANCY	Complications of pregnancy, childbirth, and the puerperium
2	DISORDER_OF_THE_GENITOURINARY_SYSTEM	Diseases of the genitourinary system
3	DISORDER_OF_CONNECTIVE_TISSUE	Diseases of the musculoskeletal system and connective tissue
3	DISORDER_OF_MUSCULOSKELETAL_SYSTEM	Diseases of the musculoskeletal system and connective tissue
4	ANGIOEDEMA_AND_OR_URTICARIA	Diseases of the skin and subcutaneous tissue
4	DISORDER_OF_PIGMENTATION	Diseases of the skin and subcutaneous tissue
4	DISORDER_OF_INTEGUMENT	Diseases of the skin and subcutaneous tissue
5	DISORDER_OF_FETUS_OR_NEWBORN	Certain conditions originating in the perinatal period
6	HEREDITARY_DISEASE	Congenital anomalies
6	CONGENITAL_DISEASE	Congenital anomalies
7	POISONING	Injury and poisoning
7	TRAUMATIC_AND_OR_NON_TRAUMATIC_INJURY	Injury and poisoning
8	HYPERPROTEINEMIA	Symptoms, signs, and ill-defined conditions
9	NEOPLASM_AND_OR_HAMARTOMA	Neoplasms
10	DISEASE_CAUSED_BY_ARTHROPOD	Infectious and parasitic diseases
10	DISEASE_CAUSED_BY_ANNELIDA	Infectious and parasitic diseases
10	INFECTIOUS_DISEASE	Infectious and parasitic diseases
10	DISEASE_CAUSED_BY_PARASITE	Infectious and parasitic diseases
11	ANEMIA	Diseases of blood and blood-forming organs
11	DISORDER_OF_CELLULAR_COMPONENT_OF_BLOOD	Diseases of blood and blood-forming organs
11	DISORDER_OF_HEMATOPOIETIC_CELL_PROLIFERATION	Diseases of blood and blood-forming organs
11	DISORDER_OF_HEMOSTATIC_SYSTEM	Diseases of blood and blood-forming organs
11	SPONTANEOUS_HEMORRHAGE	Diseases of blood and blood-forming organs
12	AUTOIMMUNE_DISEASE	Endocrine, nutritional and metabolic diseases, and immunity disorders
12	DISORDER_OF_IMMUNE_FUNCTION	Endocrine, nutritional and metabolic diseases, and immunity disorders
12	HYPERSENSITIVITY_CONDITION	Endocrine, nutritional and metabolic diseases, and immunity disorders
12	METABOLIC_DISEASE	Endocrine, nutritional and metabolic diseases, and immunity disorders
12	NUTRITIONAL_DISORDER	Endocrine, nutritional and metabolic diseases, and immunity disorders
12	OBESITY	Endocrine, nutritional and metabolic diseases, and immunity disorders
12	PROPENSITY_TO_ADVERSE_REACTIONS	Endocrine, nutritional and metabolic diseases, and immunity disorders
12	DISORDER_OF_ENDOCRINE_SYSTEM	Endocrine, nutritional and metabolic diseases, and immunity disorders
13	DISORDER_OF_NERVOUS_SYSTEM	Diseases of the nervous system
14	FELINE_HYPERESTHESIA_SYNDROME	Feline hyperesthesia syndrome
15	MENTAL_DISORDER	Mental disorders
16	DISORDER_OF_CARDIOVASCULAR_SYSTEM	Diseases of the circulatory system
17	DISORDER_OF_AUDITORY_SYSTEM	Diseases of sense organs
17	VISUAL_SYSTEM_DISORDER	Diseases of sense organs
18	VOMITING	Diseases of the digestive system
18	DISORDER_OF_DIGESTIVE_SYSTEM	Diseases of the digestive system
19	DISORDER_OF_RESPIRATORY_SYSTEM	Diseases of the respiratory system
)tsv";

inline constexpr std::string_view kDefaultOntologyTsv = R"tsv(# child_code	parent_code. 64572001 is Disease (disorder). Listed meta-category codes outside
# the 41-label set are attached below a related top-level label.
ROOT	64572001
DISORDER_OF_LABOR_DELIVERY	64572001
DISORDER_OF_PREGNANCY	64572001
DISORDER_OF_THE_GENITOURINARY_SYSTEM	64572001
DISORDER_OF_CONNECTIVE_TISSUE	64572001
DISORDER_OF_MUSCULOSKELETAL_SYSTEM	64572001
ANGIOEDEMA_AND_OR_URTICARIA	64572001
DISORDER_OF_PIGMENTATION	64572001
DISORDER_OF_INTEGUMENT	64572001
DISORDER_OF_FETUS_OR_NEWBORN	64572001
HEREDITARY_DISEASE	64572001
CONGENITAL_DISEASE	64572001
POISONING	64572001
TRAUMATIC_AND_OR_NON_TRAUMATIC_INJURY	64572001
HYPERPROTEINEMIA	64572001
NEOPLASM_AND_OR_HAMARTOMA	64572001
DISEASE_CAUSED_BY_ARTHROPOD	64572001
DISEASE_CAUSED_BY_ANNELIDA	64572001
INFECTIOUS_DISEASE	64572001
DISEASE_CAUSED_BY_PARASITE	64572001
ANEMIA	64572001
DISORDER_OF_CELLULAR_COMPONENT_OF_BLOOD	64572001
DISORDER_OF_HEMATOPOIETIC_CELL_PROLIFERATION	64572001
DISORDER_OF_HEMOSTATIC_SYSTEM	64572001
SPONTANEOUS_HEMORRHAGE	64572001
AUTOIMMUNE_DISEASE	64572001
DISORDER_OF_IMMUNE_FUNCTION	64572001
HYPERSENSITIVITY_CONDITION	64572001
METABOLIC_DISEASE	64572001
NUTRITIONAL_DISORDER	64572001
OBESITY	64572001
PROPENSITY_TO_ADVERSE_REACTIONS	64572001
DISORDER_OF_ENDOCRINE_SYSTEM	64572001
DISORDER_OF_NERVOUS_SYSTEM	64572001
FELINE_HYPERESTHESIA_SYNDROME	64572001
MENTAL_DISORDER	64572001
DISORDER_OF_CARDIOVASCULAR_SYSTEM	64572001
DISORDER_OF_AUDITORY_SYSTEM	64572001
VISUAL_SYSTEM_DISORDER	64572001
VOMITING	64572001
DISORDER_OF_DIGESTIVE_SYSTEM	64572001
DISORDER_OF_RESPIRATORY_SYSTEM	64572001
DISORDER_OF_PUERPERIUM	DISORDER_OF_PREGNANCY
FAMILIAL_DISEASE	HEREDITARY_DISEASE
DISORDER_CAUSED_BY_EXPOSURE_TO_IONIZING_RADIATION	TRAUMATIC_AND_OR_NON_TRAUMATIC_INJURY
SELF_INDUCED_DISEASE	TRAUMATIC_AND_OR_NON_TRAUMATIC_INJURY
FIBROMATOSIS	NEOPLASM_AND_OR_HAMARTOMA
DISEASE_OF_PRESUMED_INFECTIOUS_ORIGIN	INFECTIOUS_DISEASE
ENZOOTIC_DISEASE	INFECTIOUS_DISEASE
EPIZOOTIC_DISEASE	INFECTIOUS_DISEASE
HYPERVISCOSITY_SYNDROME	DISORDER_OF_CELLULAR_COMPONENT_OF_BLOOD
SECONDARY_AND_RECURRENT_HEMORRHAGE	DISORDER_OF_HEMOSTATIC_SYSTEM
SECONDARY_HEMORRHAGE	DISORDER_OF_HEMOSTATIC_SYSTEM
NUTRITIONAL_DEFICIENCY_ASSOCIATED_CONDITION	NUTRITIONAL_DISORDER
OBESITY_ASSOCIATED_DISORDER	OBESITY
VERTIGINOUS_SYNDROME	DISORDER_OF_AUDITORY_SYSTEM
SENSORY_DISORDER	DISORDER_OF_NERVOUS_SYSTEM
ENTEROTOXEMIA	DISORDER_OF_DIGESTIVE_SYSTEM
)tsv";

inline Taxonomy default_taxonomy() {
  std::istringstream labels{std::string(kDefaultLabelsTsv)};
  std::istringstream grouping{std::string(kDefaultGroupingTsv)};
  std::istringstream ontology{std::string(kDefaultOntologyTsv)};
  return parse_taxonomy(labels, grouping, ontology);
}

}  // namespace notetag
