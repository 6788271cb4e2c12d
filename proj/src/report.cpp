#include "fairlens/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fairlens::report {

namespace fs = std::filesystem;

std::vector<TopWordRow> top_k_words(std::span<const WordBiasScore> words, Attribute attribute,
                                    Direction direction, std::size_t k) {
    std::vector<TopWordRow> rows;
    for (const auto& w : words) {
        double s = w.score(attribute);
        if (direction == Direction::Positive ? s > 0.0 : s < 0.0) {
            rows.push_back({w.word, s});
        }
    }
    std::sort(rows.begin(), rows.end(), [&](const TopWordRow& a, const TopWordRow& b) {
        if (a.score != b.score) {
            return direction == Direction::Positive ? a.score > b.score : a.score < b.score;
        }
        return a.word < b.word;
    });
    if (rows.size() > k) rows.resize(k);
    return rows;
}

namespace {

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

}  // namespace

std::string render_words_csv(std::span<const WordBiasScore> words) {
    std::vector<const WordBiasScore*> rows;
    for (const auto& w : words) rows.push_back(&w);
    std::sort(rows.begin(), rows.end(), [](const WordBiasScore* a, const WordBiasScore* b) {
        return std::tie(a->model_id, a->word) < std::tie(b->model_id, b->word);
    });
    std::ostringstream out;
    out << "model,variant,domain,word,gender,age,race,n_pairs\r\n";
    for (const WordBiasScore* w : rows) {
        out << csv_escape(w->model_id) << ',' << scoring::to_string(w->variant) << ','
            << corpus::to_string(w->domain) << ',' << csv_escape(w->word) << ','
            << format_2dp(w->gender) << ',' << format_2dp(w->age) << ',' << format_2dp(w->race)
            << ',' << w->n_pairs << "\r\n";
    }
    return out.str();
}

std::string render_models_csv(std::span<const ModelBiasScore> models) {
    std::vector<const ModelBiasScore*> rows;
    for (const auto& m : models) rows.push_back(&m);
    std::sort(rows.begin(), rows.end(), [](const ModelBiasScore* a, const ModelBiasScore* b) {
        return std::tie(a->model_id, a->variant, a->domain) <
               std::tie(b->model_id, b->variant, b->domain);
    });
    std::ostringstream out;
    out << "model,variant,domain,age,race,gender,model_ave\r\n";
    // The Ave spanning cell of the published table: repeated per domain row
    // so every CSV row is self-contained.
    for (const ModelBiasScore* m : rows) {
        double ave = scoring::model_average_of(models, m->model_id, m->variant);
        out << csv_escape(m->model_id) << ',' << scoring::to_string(m->variant) << ','
            << corpus::to_string(m->domain) << ',' << format_2dp(m->age) << ','
            << format_2dp(m->race) << ',' << format_2dp(m->gender) << ',' << format_2dp(ave)
            << "\r\n";
    }
    return out.str();
}

std::string render_mitigation_csv(const MitigationComparison& comparison) {
    std::ostringstream out;
    out << "model,attribute,word,ori,miti\r\n";
    auto rows = comparison.rows;
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.key.model_id, a.key.attribute, a.key.word) <
               std::tie(b.key.model_id, b.key.attribute, b.key.word);
    });
    for (const auto& row : rows) {
        out << csv_escape(row.key.model_id) << ',' << scoring::to_string(row.key.attribute) << ','
            << csv_escape(row.key.word) << ',' << format_2dp(row.ori) << ','
            << format_2dp(row.miti) << "\r\n";
    }
    auto summaries = comparison.summaries;
    std::sort(summaries.begin(), summaries.end(),
              [](const auto& a, const auto& b) { return a.model_id < b.model_id; });
    for (const auto& s : summaries) {
        out << csv_escape(s.model_id) << ",summary,," << format_2dp(s.score_ori) << ','
            << format_2dp(s.score_miti) << "\r\n";
    }
    return out.str();
}

namespace {

// Fixed two-decimal coordinate formatting keeps the SVG byte-deterministic.
std::string coord(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string xml_escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string distribution_figure(std::span<const FigureRow> rows, const std::string& title) {
    constexpr double kWidth = 640.0;
    constexpr double kPanelHeight = 120.0;
    constexpr double kMarginLeft = 70.0;
    constexpr double kMarginRight = 20.0;
    constexpr double kTop = 40.0;

    struct Panel {
        const char* label;
        const char* color;
        std::vector<std::pair<std::string, double>> marks;  // (word, score)
    };
    std::vector<Panel> panels = {{"age", "#d95f02", {}},
                                 {"race", "#7570b3", {}},
                                 {"gender", "#1b9e77", {}}};

    std::vector<const FigureRow*> ordered;
    for (const auto& r : rows) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const FigureRow* a, const FigureRow* b) { return a->word < b->word; });
    for (const FigureRow* r : ordered) {
        if (r->age) panels[0].marks.push_back({r->word, *r->age});
        if (r->race) panels[1].marks.push_back({r->word, *r->race});
        if (r->gender) panels[2].marks.push_back({r->word, *r->gender});
    }

    // Shared symmetric x-scale so the zero line is comparable across panels.
    double max_abs = 1.0;
    for (const auto& panel : panels) {
        for (const auto& [word, s] : panel.marks) max_abs = std::max(max_abs, std::abs(s));
    }
    double plot_w = kWidth - kMarginLeft - kMarginRight;
    auto x_of = [&](double score) {
        return kMarginLeft + (score + max_abs) / (2.0 * max_abs) * plot_w;
    };
    double zero_x = x_of(0.0);

    double height = kTop + panels.size() * kPanelHeight + 20.0;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << coord(kWidth) << "\" height=\""
        << coord(height) << "\" viewBox=\"0 0 " << coord(kWidth) << " " << coord(height)
        << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << coord(kWidth) << "\" height=\"" << coord(height)
        << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << coord(kWidth / 2.0)
        << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
        << xml_escape(title) << "</text>\n";

    for (std::size_t p = 0; p < panels.size(); ++p) {
        double top = kTop + static_cast<double>(p) * kPanelHeight;
        double mid = top + kPanelHeight / 2.0;
        svg << "<text x=\"10\" y=\"" << coord(mid + 4.0)
            << "\" font-family=\"sans-serif\" font-size=\"13\">" << panels[p].label
            << "</text>\n";
        svg << "<line x1=\"" << coord(kMarginLeft) << "\" y1=\"" << coord(mid) << "\" x2=\""
            << coord(kWidth - kMarginRight) << "\" y2=\"" << coord(mid)
            << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
        // zero line
        svg << "<line class=\"zero\" x1=\"" << coord(zero_x) << "\" y1=\"" << coord(top + 12.0)
            << "\" x2=\"" << coord(zero_x) << "\" y2=\"" << coord(top + kPanelHeight - 12.0)
            << "\" stroke=\"#444444\" stroke-width=\"1\" stroke-dasharray=\"3 2\"/>\n";

        if (panels[p].marks.empty()) {
            svg << "<text x=\"" << coord(kMarginLeft + plot_w / 2.0) << "\" y=\""
                << coord(mid - 10.0)
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
                   "fill=\"#999999\">no data</text>\n";
            continue;
        }
        for (std::size_t i = 0; i < panels[p].marks.size(); ++i) {
            const auto& [word, score] = panels[p].marks[i];
            // Deterministic vertical stagger keeps overlapping marks readable.
            double dy = (static_cast<double>(i % 7) - 3.0) * 6.0;
            svg << "<circle class=\"mark\" data-attr=\"" << panels[p].label << "\" cx=\""
                << coord(x_of(score)) << "\" cy=\"" << coord(mid + dy)
                << "\" r=\"4\" fill=\"" << panels[p].color << "\" fill-opacity=\"0.75\">"
                << "<title>" << xml_escape(word) << ": " << format_2dp(score)
                << "</title></circle>\n";
        }
    }

    // x-axis extremes
    svg << "<text x=\"" << coord(kMarginLeft) << "\" y=\"" << coord(height - 6.0)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << format_2dp(-max_abs)
        << "</text>\n";
    svg << "<text x=\"" << coord(kWidth - kMarginRight) << "\" y=\"" << coord(height - 6.0)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_2dp(max_abs) << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

ReportBundle emit_bundle(const BundleInputs& inputs, const fs::path& output_root) {
    ReportBundle bundle;
    bundle.run_id = inputs.run_id;
    fs::path dir = output_root / "reports" / inputs.run_id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        raise(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
    }

    const Domain domains[] = {Domain::Activity, Domain::Object, Domain::Personality,
                              Domain::Profession};
    for (Domain d : domains) {
        std::vector<WordBiasScore> domain_words;
        for (const auto& w : inputs.words) {
            if (w.domain == d) domain_words.push_back(w);
        }
        fs::path table = dir / ("words_" + std::string(corpus::to_string(d)) + ".csv");
        write_text_file(table, render_words_csv(domain_words));
        bundle.tables.push_back(table);

        std::vector<FigureRow> rows;
        for (const auto& w : domain_words) {
            rows.push_back(FigureRow{w.word, w.age, w.race, w.gender});
        }
        fs::path figure = dir / ("dist_" + std::string(corpus::to_string(d)) + ".svg");
        std::string title = "Word bias scores: " + std::string(corpus::to_string(d));
        write_text_file(figure, distribution_figure(rows, title));
        bundle.figures.push_back(figure);
    }

    fs::path models_table = dir / "models.csv";
    write_text_file(models_table, render_models_csv(inputs.models));
    bundle.tables.push_back(models_table);

    if (inputs.mitigation) {
        fs::path mitigation_table = dir / "mitigation.csv";
        write_text_file(mitigation_table, render_mitigation_csv(*inputs.mitigation));
        bundle.tables.push_back(mitigation_table);
    }

    bundle.audit_path = dir / "audit.json";
    write_text_file(bundle.audit_path, inputs.audit.dump(2) + "\n");
    return bundle;
}

}  // namespace fairlens::report
