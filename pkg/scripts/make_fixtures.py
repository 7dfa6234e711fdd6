#!/usr/bin/env python3
"""Generate the bundled fixture corpora and knowledge snapshot.

Everything is seeded, so rerunning this script reproduces the committed
files byte for byte. Run from the repository root:

    python3 scripts/make_fixtures.py
"""
from __future__ import annotations

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
CORPORA = ROOT / "tests" / "fixtures" / "corpora"
KB_DIR = ROOT / "tests" / "fixtures" / "kb"

DISEASES = [
    "arrhythmia", "cardiovascular depression", "hypertension", "hypotension",
    "bradycardia", "tachycardia", "myocardial infarction", "heart failure",
    "diabetes mellitus", "hypoglycemia", "hyperglycemia", "asthma",
    "pneumonia", "bronchitis", "epilepsy", "seizure disorder", "migraine",
    "anemia", "sepsis", "nephrotoxicity", "hepatotoxicity", "renal failure",
    "liver cirrhosis", "gastritis", "colitis", "pancreatitis",
    "thrombocytopenia", "neutropenia", "leukopenia", "hyperkalemia",
    "hyponatremia", "metabolic acidosis", "alkalosis", "tardive dyskinesia",
    "parkinsonism", "peripheral neuropathy", "myopathy", "contact dermatitis",
    "urticaria", "anaphylaxis", "osteoporosis", "rheumatoid arthritis",
    "ankylosing spondylitis", "rheumatic diseases", "major depression",
    "anxiety disorder", "psychosis", "delirium", "insomnia", "vertigo",
    "tinnitus", "glaucoma", "cataract", "hypothyroidism", "hyperthyroidism",
    "obesity", "cachexia", "pulmonary edema", "atrial fibrillation",
    "ventricular tachycardia", "stroke", "pulmonary embolism",
    "deep vein thrombosis", "hemolytic anemia", "agranulocytosis",
]
DISEASE_ALIASES = {
    "ankylosing spondylitis": ["AS"],
    "myocardial infarction": ["heart attack", "MI"],
    "arrhythmia": ["cardiac arrhythmia"],
    "atrial fibrillation": ["AF"],
    "diabetes mellitus": ["diabetes"],
    "rheumatic diseases": ["Rheumatic Diseases", "rheumatic disease"],
    "major depression": ["major depressive disorder"],
    "deep vein thrombosis": ["DVT"],
    "pulmonary embolism": ["PE"],
}
DISEASE_DEFS = {
    "arrhythmia": "An irregular or abnormal heart rhythm.",
    "cardiovascular depression": "A reduction of cardiac output and vascular tone leading to circulatory compromise.",
    "hypertension": "Persistently elevated arterial blood pressure.",
    "hypotension": "Abnormally low arterial blood pressure.",
    "bradycardia": "A slower than normal heart rate.",
    "tachycardia": "A faster than normal resting heart rate.",
    "myocardial infarction": "Necrosis of heart muscle caused by interrupted coronary blood supply.",
    "heart failure": "Inability of the heart to pump blood sufficient for metabolic demand.",
    "diabetes mellitus": "A metabolic disorder of chronic hyperglycemia due to defective insulin secretion or action.",
    "hypoglycemia": "An abnormally low concentration of glucose in the blood.",
    "asthma": "A chronic inflammatory airway disease with reversible bronchial obstruction.",
    "pneumonia": "An infection that inflames the air sacs of one or both lungs.",
    "epilepsy": "A neurologic disorder marked by recurrent unprovoked seizures.",
    "anemia": "A deficiency of red blood cells or hemoglobin in the blood.",
    "sepsis": "A life-threatening organ dysfunction caused by a dysregulated host response to infection.",
    "nephrotoxicity": "Toxic injury to the kidneys caused by drugs or chemicals.",
    "hepatotoxicity": "Chemical-driven injury to the liver.",
    "ankylosing spondylitis": "A chronic inflammatory arthritis primarily affecting the spine and sacroiliac joints.",
    "rheumatic diseases": "Disorders of joints and connective tissue marked by inflammation and pain.",
    "anaphylaxis": "A severe, rapid-onset systemic hypersensitivity reaction.",
    "tardive dyskinesia": "Involuntary repetitive movements caused by long-term dopamine antagonist exposure.",
    "atrial fibrillation": "An irregular, often rapid atrial rhythm causing poor blood flow.",
}

CHEMICALS = [
    "bupivacaine", "propofol", "aspirin", "ibuprofen", "acetaminophen",
    "lidocaine", "ketamine", "morphine", "fentanyl", "naloxone", "metformin",
    "warfarin", "heparin", "clopidogrel", "atorvastatin", "simvastatin",
    "amiodarone", "digoxin", "verapamil", "diltiazem", "amlodipine",
    "lisinopril", "losartan", "furosemide", "spironolactone",
    "hydrochlorothiazide", "omeprazole", "ranitidine", "ondansetron",
    "metoclopramide", "dexamethasone", "prednisone", "hydrocortisone",
    "penicillin", "amoxicillin", "vancomycin", "gentamicin", "ciprofloxacin",
    "azithromycin", "doxycycline", "rifampicin", "isoniazid", "cisplatin",
    "doxorubicin", "methotrexate", "cyclophosphamide", "tamoxifen",
    "paclitaxel", "fluorouracil", "caffeine", "nicotine", "phenytoin",
    "carbamazepine", "valproate", "lamotrigine", "diazepam", "lorazepam",
    "midazolam", "haloperidol", "risperidone", "olanzapine", "fluoxetine",
    "sertraline", "venlafaxine", "lithium carbonate", "epinephrine",
    "norepinephrine", "dopamine", "atropine", "succinylcholine",
]
CHEMICAL_ALIASES = {
    "aspirin": ["acetylsalicylic acid", "ASA"],
    "acetaminophen": ["paracetamol"],
    "fluorouracil": ["5-FU"],
    "epinephrine": ["adrenaline"],
    "norepinephrine": ["noradrenaline"],
    "valproate": ["valproic acid"],
    "lithium carbonate": ["lithium"],
}
CHEMICAL_DEFS = {
    "bupivacaine": "A long-acting amide local anesthetic that blocks sodium channels in nerve fibers.",
    "propofol": "A short-acting intravenous anesthetic agent used for induction and maintenance of anesthesia.",
    "aspirin": "A salicylate that inhibits cyclooxygenase, used for pain, fever, and antiplatelet therapy.",
    "lidocaine": "An amide local anesthetic and class Ib antiarrhythmic agent.",
    "ketamine": "A dissociative anesthetic acting as an NMDA receptor antagonist.",
    "morphine": "An opioid analgesic derived from opium used for severe pain.",
    "metformin": "A biguanide that lowers hepatic glucose production in type 2 diabetes.",
    "warfarin": "An oral anticoagulant that antagonizes vitamin K dependent clotting factors.",
    "heparin": "An injectable anticoagulant that potentiates antithrombin III.",
    "amiodarone": "A class III antiarrhythmic used for ventricular and atrial arrhythmias.",
    "digoxin": "A cardiac glycoside that increases myocardial contractility.",
    "cisplatin": "A platinum-based alkylating-like agent used in cancer chemotherapy.",
    "methotrexate": "A folate antagonist used in chemotherapy and autoimmune disease.",
    "penicillin": "A beta-lactam antibiotic that inhibits bacterial cell wall synthesis.",
    "phenytoin": "A hydantoin anticonvulsant that stabilizes neuronal sodium channels.",
    "haloperidol": "A butyrophenone antipsychotic and dopamine D2 receptor antagonist.",
    "epinephrine": "A catecholamine hormone and vasopressor used in anaphylaxis and cardiac arrest.",
}

PROCEDURES = [
    ("hemodialysis", "T061", "Extracorporeal removal of waste products from blood in renal failure."),
    ("chemotherapy", "T061", "Treatment of disease, especially cancer, with cytotoxic drugs."),
    ("radiotherapy", "T061", "Treatment using ionizing radiation to destroy malignant cells."),
    ("immunotherapy", "T061", "Treatment that modulates the immune system to fight disease."),
    ("angioplasty", "T061", "Mechanical widening of a narrowed or obstructed blood vessel."),
    ("thrombolysis", "T061", "Pharmacologic dissolution of a blood clot."),
    ("intubation", "T061", "Insertion of a tube into the trachea to maintain an airway."),
    ("mechanical ventilation", "T061", "Assisted breathing delivered by a ventilator."),
    ("blood transfusion", "T061", "Intravenous administration of donor blood or components."),
    ("liver transplantation", "T061", "Surgical replacement of a diseased liver with a donor organ."),
    ("blood gas analysis", "T059", "Laboratory measurement of oxygen, carbon dioxide, and pH in blood."),
    ("complete blood count", "T059", "Laboratory panel quantifying blood cell populations."),
    ("liver function test", "T059", "Laboratory panel assessing hepatic enzymes and synthetic function."),
    ("urinalysis", "T059", "Laboratory examination of urine composition."),
    ("echocardiography", "T060", "Ultrasound imaging of cardiac structure and function."),
    ("electrocardiography", "T060", "Recording of the electrical activity of the heart."),
    ("magnetic resonance imaging", "T060", "Imaging technique using magnetic fields and radio waves."),
    ("computed tomography", "T060", "Cross-sectional imaging built from multiple X-ray projections."),
    ("myocardium", "T024", "The muscular tissue layer of the heart wall."),
    ("hippocampus", "T017", "A brain structure in the medial temporal lobe involved in memory."),
    ("renal cortex", "T017", "The outer portion of the kidney containing glomeruli."),
    ("aorta", "T017", "The main artery carrying blood from the left ventricle."),
    ("hemoglobin", "T123", "The oxygen-carrying protein complex of red blood cells."),
    ("creatinine", "T123", "A breakdown product of creatine used to estimate renal function."),
    ("troponin", "T123", "A cardiac muscle protein released during myocardial injury."),
]

# Concepts with semantic types outside the default allowlist: present in the
# snapshot (and in passages) but never eligible for linking.
DISALLOWED = [
    ("headache", "T184", "Pain located in the head."),
    ("nausea", "T184", "A sensation of unease in the stomach with an urge to vomit."),
    ("dizziness", "T184", "A sensation of unsteadiness or lightheadedness."),
    ("skin rash", "T184", "An eruption or discoloration of the skin."),
    ("fatigue", "T033", "A state of tiredness or exhaustion."),
    ("weight loss", "T033", "A decrease in body weight."),
    ("fever", "T184", "An elevation of body temperature above the normal range."),
    ("vomiting", "T184", "The forcible expulsion of stomach contents through the mouth."),
    ("cough", "T184", "A sudden expulsion of air from the lungs."),
    ("pruritus", "T184", "An itching sensation of the skin."),
    ("elderly patients", "T100", "Aged persons receiving medical care."),
    ("placebo effect", "T080", "A beneficial effect attributable to expectation rather than treatment."),
    ("double-blind study", "T062", "A study design in which neither subjects nor investigators know assignments."),
    ("body mass index", "T081", "A weight-to-height ratio used to classify body size."),
    ("clinical remission", "T033", "A period during which disease signs and symptoms abate."),
    ("drug interaction", "T044", "Modification of a drug's effect by another substance."),
    ("adverse event", "T033", "An unfavorable medical occurrence during treatment."),
    ("quality of life", "T078", "A measure of overall wellbeing and daily functioning."),
    ("informed consent", "T170", ""),  # allowlisted type but deliberately no definition
    ("saline", "T121", ""),  # allowlisted, no definition (tests bare-term bundle items)
]

# Wikidata mirrors of a subset of UMLS terms: same aliases, different
# definition style, distinct concept ids.
WIKIDATA_TERMS = [
    "arrhythmia", "cardiovascular depression", "hypertension", "asthma",
    "pneumonia", "epilepsy", "anemia", "sepsis", "ankylosing spondylitis",
    "rheumatic diseases", "bupivacaine", "propofol", "aspirin", "lidocaine",
    "ketamine", "morphine", "metformin", "warfarin", "amiodarone", "digoxin",
]
GENERATED_TERMS = [
    "arrhythmia", "hypertension", "asthma", "sepsis", "bupivacaine",
    "propofol", "aspirin", "ketamine", "warfarin", "digoxin",
    "hypoglycemia", "pneumonia",
]

SENTENCE_TEMPLATES = [
    "Pre-treatment of {c0}-induced {d0} using different lipid formulations of {c1}.",
    "Treatment with {c0} was associated with transient {d0} in the study cohort.",
    "We report a case of {d0} following intravenous administration of {c0}.",
    "Co-administration of {c0} and {c1} reduced the incidence of {d0}.",
    "Two patients receiving high-dose {c0} developed {d0} within 48 hours.",
    "The risk of {d0} and {d1} increased after prolonged exposure to {c0}.",
    "Low-dose {c0} prevented {d0} in patients with a history of {d1}.",
    "Randomized trial comparing {c0} with {c1} for the prevention of {d0}.",
    "Continuous infusion of {c0} controlled {d0} without inducing {d1}.",
    "{c0} rechallenge reproduced the original episode of {d0}.",
]
NCBI_TEMPLATES = [
    "Twins with {a0} were identified from the Royal National Hospital for {a1} database.",
    "Patients diagnosed with {a0} showed early signs of {a1}.",
    "A novel susceptibility locus for {a0} was mapped in affected families.",
    "Clinical features of {a0} overlap substantially with those of {a1}.",
    "Screening identified {a0} in three unrelated probands.",
    "The prevalence of {a0} among carriers exceeded population estimates.",
    "Mutation carriers developed {a0} earlier than non-carriers.",
    "Familial clustering of {a0} and {a1} suggested a shared etiology.",
]


def build_cdr_like(rng: random.Random) -> dict:
    schema = {
        "name": "cdr_like",
        "open_schema": False,
        "labels": [
            {"label": "Chemicals", "description": "Drugs and chemical substances mentioned in the text."},
            {"label": "Diseases", "description": "Diseases, syndromes, and pathologic conditions mentioned in the text."},
        ],
    }
    records = []
    # Anchor instance: the classic chemical-induced-disease sentence shape.
    records.append(
        {
            "id": "cdr_test_0001",
            "split": "test",
            "text": "Pre-treatment of bupivacaine-induced cardiovascular depression "
            "using different lipid formulations of propofol.",
            "entities": [
                {"surface": "bupivacaine", "type": "Chemicals"},
                {"surface": "propofol", "type": "Chemicals"},
                {"surface": "cardiovascular depression", "type": "Diseases"},
            ],
        }
    )
    chems = [c for c in CHEMICALS if " " not in c]
    for i in range(2, 26):
        template = SENTENCE_TEMPLATES[rng.randrange(len(SENTENCE_TEMPLATES))]
        c0, c1 = rng.sample(chems, 2)
        d0, d1 = rng.sample(DISEASES, 2)
        text = template.format(c0=c0, c1=c1, d0=d0, d1=d1)
        entities = []
        for surface, label in ((c0, "Chemicals"), (c1, "Chemicals"), (d0, "Diseases"), (d1, "Diseases")):
            if "{" + {"Chemicals": "c", "Diseases": "d"}[label] + "0}" in template or surface in text:
                if surface in text:
                    entities.append({"surface": surface, "type": label})
        if rng.random() < 0.08:
            entities = []  # keep a few vacuously annotated instances
        records.append(
            {"id": f"cdr_test_{i:04d}", "split": "test", "text": text, "entities": entities}
        )
    for i in range(1, 13):
        template = SENTENCE_TEMPLATES[rng.randrange(len(SENTENCE_TEMPLATES))]
        c0, c1 = rng.sample(chems, 2)
        d0, d1 = rng.sample(DISEASES, 2)
        text = template.format(c0=c0, c1=c1, d0=d0, d1=d1)
        entities = [
            {"surface": s, "type": t}
            for s, t in ((c0, "Chemicals"), (c1, "Chemicals"), (d0, "Diseases"), (d1, "Diseases"))
            if s in text
        ]
        records.append(
            {"id": f"cdr_train_{i:04d}", "split": "train", "text": text, "entities": entities}
        )
    return {"schema": schema, "records": records}


def build_ncbi_like(rng: random.Random) -> dict:
    schema = {
        "name": "ncbi_like",
        "open_schema": False,
        "labels": [
            {"label": "Diseases", "description": "Disease mentions, including inherited disorders and syndromes."}
        ],
    }
    records = []
    records.append(
        {
            "id": "ncbi_test_0001",
            "split": "test",
            "text": "Twins with AS were identified from the Royal National Hospital "
            "for Rheumatic Diseases database.",
            "entities": [
                {"surface": "AS", "type": "Diseases"},
                {"surface": "Rheumatic Diseases", "type": "Diseases"},
            ],
        }
    )
    for i in range(2, 26):
        template = NCBI_TEMPLATES[rng.randrange(len(NCBI_TEMPLATES))]
        a0, a1 = rng.sample(DISEASES, 2)
        text = template.format(a0=a0, a1=a1)
        entities = [{"surface": s, "type": "Diseases"} for s in (a0, a1) if s in text]
        records.append(
            {"id": f"ncbi_test_{i:04d}", "split": "test", "text": text, "entities": entities}
        )
    for i in range(1, 9):
        template = NCBI_TEMPLATES[rng.randrange(len(NCBI_TEMPLATES))]
        a0, a1 = rng.sample(DISEASES, 2)
        text = template.format(a0=a0, a1=a1)
        entities = [{"surface": s, "type": "Diseases"} for s in (a0, a1) if s in text]
        records.append(
            {"id": f"ncbi_train_{i:04d}", "split": "train", "text": text, "entities": entities}
        )
    return {"schema": schema, "records": records}


def build_kb(rng: random.Random) -> list[list[str]]:
    rows = []
    cui_counter = 1

    def next_cui(prefix: str) -> str:
        nonlocal cui_counter
        cui = f"{prefix}{cui_counter:07d}"
        cui_counter += 1
        return cui

    def disease_def(term: str) -> str:
        return DISEASE_DEFS.get(term, f"A pathologic condition recognized clinically as {term}.")

    def chemical_def(term: str) -> str:
        return CHEMICAL_DEFS.get(term, f"A pharmacologic substance administered therapeutically, known as {term}.")

    undefined = set(rng.sample(DISEASES + CHEMICALS, 13))  # ~10% lack definitions

    for term in DISEASES:
        aliases = [term.title()] + DISEASE_ALIASES.get(term, [])
        definition = "" if term in undefined else disease_def(term)
        rows.append([next_cui("C"), term, "|".join(aliases), "T047", definition, "UMLS"])
    for term in CHEMICALS:
        aliases = [term.title()] + CHEMICAL_ALIASES.get(term, [])
        definition = "" if term in undefined else chemical_def(term)
        rows.append([next_cui("C"), term, "|".join(aliases), "T121", definition, "UMLS"])
    for term, tui, definition in PROCEDURES:
        rows.append([next_cui("C"), term, "", tui, definition, "UMLS"])
    for term, tui, definition in DISALLOWED:
        rows.append([next_cui("C"), term, "", tui, definition, "UMLS"])

    wiki_counter = 1
    for term in WIKIDATA_TERMS:
        aliases = [term.title()] + DISEASE_ALIASES.get(term, CHEMICAL_ALIASES.get(term, []))
        tui = "T047" if term in DISEASES else "T121"
        definition = f"{term.capitalize()}: entry summarized from a general-purpose knowledge graph."
        rows.append([f"W{wiki_counter:07d}", term, "|".join(aliases), tui, definition, "WIKIDATA"])
        wiki_counter += 1

    gen_counter = 1
    for term in GENERATED_TERMS:
        definition = f"{term.capitalize()} is a biomedical concept; this definition was produced by a language model."
        rows.append([f"G{gen_counter:07d}", term, "", "T000", definition, "GENERATED"])
        gen_counter += 1
    return rows


def main() -> None:
    rng = random.Random(20240501)
    CORPORA.mkdir(parents=True, exist_ok=True)
    KB_DIR.mkdir(parents=True, exist_ok=True)

    for build in (build_cdr_like, build_ncbi_like):
        bundle = build(rng)
        name = bundle["schema"]["name"]
        (CORPORA / f"{name}.schema.json").write_text(
            json.dumps(bundle["schema"], indent=2) + "\n", encoding="utf-8"
        )
        with open(CORPORA / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            for rec in bundle["records"]:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        print(f"{name}: {len(bundle['records'])} instances")

    rows = build_kb(rng)
    with open(KB_DIR / "snapshot.tsv", "w", encoding="utf-8", newline="") as fh:
        fh.write("cui\tcanonical_name\taliases\ttui\tdefinition\tsource\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")
    print(f"kb: {len(rows)} concepts")


if __name__ == "__main__":
    main()
