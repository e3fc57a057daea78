"""
Module for generating Word reports of finished search runs
"""

import json
import logging

from docx import Document
from docx.enum.text import WD_ALIGN_PARAGRAPH

logger = logging.getLogger(__name__)

TOP_RECORDS = 10


def _add_key_value_table(doc, rows):
    table = doc.add_table(rows=0, cols=2)
    table.style = "Table Grid"
    for key, value in rows:
        cells = table.add_row().cells
        cells[0].text = str(key)
        cells[1].text = str(value)
    return table


def create_run_report(path, cfg, best, records, title="Architecture search report"):
    """
    Create a Word document summarizing a search run

    Args:
        path (str): Where to save the document
        cfg (SearchConfig): Resolved configuration of the run
        best (FitnessRecord): Best record of the run
        records (sequence): Memory-table snapshot
        title (str): Document title

    Returns:
        str: Path to the generated document, or None if it could not be written
    """
    if best is None:
        return None

    try:
        doc = Document()
        doc.core_properties.title = title

        heading = doc.add_heading(title, 0)
        heading.alignment = WD_ALIGN_PARAGRAPH.CENTER

        summary = doc.add_paragraph()
        summary.alignment = WD_ALIGN_PARAGRAPH.CENTER
        summary.add_run(
            f"{len(records)} evaluated genotypes, {cfg.fitness_backend} fitness, seed {cfg.seed}"
        ).italic = True

        doc.add_heading("Configuration", 1)
        config_rows = []
        for key, value in cfg.to_dict().items():
            config_rows.append((key, json.dumps(value) if isinstance(value, (dict, list)) else value))
        _add_key_value_table(doc, config_rows)

        doc.add_heading("Best genotype", 1)
        _add_key_value_table(doc, [
            ("Genotype id", best.genotype_id),
            ("Step", best.step_index),
            ("Fitness", f"{best.fitness:.4f}"),
            ("Parameters", best.param_count),
        ])

        genotype = best.genotype
        for level, row in enumerate(genotype.motifs, start=2):
            for m, motif in enumerate(row, start=1):
                name = "Cell" if level == genotype.spec.levels else f"Level {level} motif {m}"
                doc.add_heading(name, 2)
                if not motif.edges:
                    doc.add_paragraph("No edges")
                for i, j, k in motif.edges:
                    doc.add_paragraph(f"{j} -> {i}: operation {k}", style="List Bullet")

        doc.add_heading(f"Top {TOP_RECORDS} records", 1)
        table = doc.add_table(rows=1, cols=5)
        table.style = "Table Grid"
        for cell, label in zip(table.rows[0].cells, ("Step", "Genotype", "Fitness", "Parameters", "Edit")):
            cell.text = label
        ranked = sorted(records, key=lambda r: (-r.fitness, r.genotype_id))[:TOP_RECORDS]
        for record in ranked:
            cells = table.add_row().cells
            cells[0].text = str(record.step_index)
            cells[1].text = str(record.genotype_id)
            cells[2].text = f"{record.fitness:.4f}"
            cells[3].text = str(record.param_count)
            cells[4].text = record.edit_class

        doc.save(path)
        return path

    except Exception as e:
        logger.error(f"Error generating run report: {str(e)}")
        return None
