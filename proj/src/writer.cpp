#include "heta/writer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>

#include "heta/table_store.hpp"

namespace heta::writer {

namespace {

bool is_degraded_provider(const Error& e) {
  return e.kind() == ErrorKind::ProviderUnavailable || e.kind() == ErrorKind::FixtureMissing;
}

struct Marker {
  std::size_t pos = 0;
  std::size_t len = 0;
  long value = 0;
};

std::vector<Marker> scan_markers(const std::string& text) {
  std::vector<Marker> markers;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '[') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i + 1 && j < text.size() && text[j] == ']') {
      markers.push_back(Marker{i, j - i + 1, std::strtol(text.substr(i + 1, j - i - 1).c_str(),
                                                          nullptr, 10)});
      i = j + 1;
    } else {
      ++i;
    }
  }
  return markers;
}

std::string one_line(const std::string& text) {
  std::string out = text;
  std::replace(out.begin(), out.end(), '\n', ' ');
  return trim(out);
}

ReportPlan fallback_plan(const std::string& query) {
  ReportPlan plan;
  plan.title = query;
  plan.sections.push_back(SectionPlan{query, query});
  return plan;
}

}  // namespace

ReportPlan plan_outline(const std::string& query, gateway::Gateway& gw,
                        const WriterConfig& config) {
  std::string reply;
  try {
    reply = gw.ask("outline_plan", {{"query", query}}).text;
  } catch (const Error& e) {
    if (!is_degraded_provider(e)) throw;
    warn(std::string("outline planning unavailable, using a single section: ") + e.what());
    return fallback_plan(query);
  }

  ReportPlan plan;
  try {
    auto parsed = nlohmann::json::parse(reply);
    plan.title = parsed.at("title").get<std::string>();
    for (const auto& section : parsed.at("sections")) {
      SectionPlan sp;
      sp.heading = trim(section.at("heading").get<std::string>());
      sp.section_query = trim(section.at("section_query").get<std::string>());
      plan.sections.push_back(std::move(sp));
    }
  } catch (const nlohmann::json::exception&) {
    warn("outline reply malformed, using a single section");
    return fallback_plan(query);
  }
  if (plan.sections.empty()) {
    warn("outline reply had no sections, using a single section");
    return fallback_plan(query);
  }

  if (plan.title.empty()) plan.title = query;
  if (static_cast<int>(plan.sections.size()) > config.sections_max)
    plan.sections.resize(static_cast<std::size_t>(config.sections_max));

  std::set<std::string> headings;
  for (std::size_t i = 0; i < plan.sections.size(); ++i) {
    auto& section = plan.sections[i];
    if (section.heading.empty()) {
      section.heading = "Section " + std::to_string(i + 1);
      warn("outline section " + std::to_string(i + 1) + " had an empty heading");
    }
    if (section.section_query.empty()) section.section_query = section.heading;
    if (!headings.insert(section.heading).second) {
      int suffix = 2;
      std::string base = section.heading;
      while (!headings.insert(base + " (" + std::to_string(suffix) + ")").second) ++suffix;
      section.heading = base + " (" + std::to_string(suffix) + ")";
      warn("duplicate outline heading renamed to " + section.heading);
    }
  }

  int pad = 1;
  while (static_cast<int>(plan.sections.size()) < config.sections_min) {
    std::string heading = pad == 1 ? "Conclusion" : "Conclusion " + std::to_string(pad);
    while (headings.count(heading)) {
      ++pad;
      heading = "Conclusion " + std::to_string(pad);
    }
    headings.insert(heading);
    plan.sections.push_back(SectionPlan{heading, query});
    ++pad;
  }
  return plan;
}

std::vector<retrieval::ExpandedHit> doc_finder(const retrieval::StoreContext& ctx,
                                               const ingest::Corpus& corpus,
                                               const std::string& section_query, int k) {
  if (!ctx.embedder || !ctx.vectors)
    raise(ErrorKind::InvalidPolicy, "doc finder requires the vector store");
  auto query_vec = ctx.embedder->embed_text(section_query);
  auto hits = ctx.vectors->search_topk(query_vec, k, nullptr);
  std::vector<std::string> ids;
  for (const auto& hit : hits) ids.push_back(hit.chunk_id);
  return retrieval::expand_parents(ids, corpus);
}

SectionDraft draft_section(const SectionPlan& section,
                           const std::vector<retrieval::ExpandedHit>& context,
                           gateway::Gateway& gw) {
  SectionDraft draft;
  draft.heading = section.heading;
  for (const auto& hit : context) draft.context_chunk_ids.push_back(hit.chunk_id);
  if (context.empty()) {
    draft.body_markdown = "No evidence found.";
    return draft;
  }

  std::string numbered;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (!numbered.empty()) numbered += "\n\n";
    numbered += "[" + std::to_string(i + 1) + "] " + context[i].context_text;
  }
  std::string reply = gw.ask("section_draft", {{"heading", section.heading},
                                               {"section_query", section.section_query},
                                               {"context", numbered}})
                          .text;

  // Strip markers that point outside the context and record cited chunks in
  // first-citation order.
  std::string body;
  body.reserve(reply.size());
  std::size_t cursor = 0;
  std::set<std::string> cited;
  for (const auto& marker : scan_markers(reply)) {
    body += reply.substr(cursor, marker.pos - cursor);
    cursor = marker.pos + marker.len;
    if (marker.value < 1 || marker.value > static_cast<long>(context.size())) {
      warn("section '" + section.heading + "' cited [" + std::to_string(marker.value) +
           "] outside its context, marker stripped");
      continue;
    }
    body += reply.substr(marker.pos, marker.len);
    const auto& chunk_id = draft.context_chunk_ids[static_cast<std::size_t>(marker.value - 1)];
    if (cited.insert(chunk_id).second) draft.used_chunk_ids.push_back(chunk_id);
  }
  body += reply.substr(cursor);
  draft.body_markdown = trim(body);
  return draft;
}

std::vector<VisualAsset> collect_assets(const ingest::Corpus& corpus) {
  std::vector<VisualAsset> assets;
  for (const auto& chunk : corpus.chunks()) {
    if (chunk.modality != ingest::Modality::image && chunk.modality != ingest::Modality::table)
      continue;
    VisualAsset asset;
    asset.chunk_id = chunk.chunk_id;
    asset.modality = chunk.modality;
    asset.caption = chunk.text.empty() ? chunk.chunk_id : chunk.text;
    if (chunk.modality == ingest::Modality::image)
      asset.media_path = chunk.media_path.value_or("");
    else
      asset.table_text = chunk.text;
    assets.push_back(std::move(asset));
  }
  return assets;
}

namespace {

std::string render_asset(const VisualAsset& asset) {
  if (asset.modality == ingest::Modality::image)
    return "![" + one_line(asset.caption) + "](" + asset.media_path + ")";
  auto grid = table_store::table_grid(asset.table_text);
  bool rectangular = !grid.empty();
  for (const auto& row : grid)
    if (row.size() != grid[0].size()) rectangular = false;
  if (!rectangular) return "```\n" + asset.table_text + "\n```";
  std::string md;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    md += "|";
    for (const auto& cell : grid[r]) md += " " + cell + " |";
    md += "\n";
    if (r == 0) {
      md += "|";
      for (std::size_t c = 0; c < grid[0].size(); ++c) md += " --- |";
      md += "\n";
    }
  }
  if (!md.empty() && md.back() == '\n') md.pop_back();
  return md;
}

}  // namespace

std::vector<VisualAsset> place_visuals(std::vector<SectionDraft>& drafts,
                                       const std::vector<VisualAsset>& assets,
                                       const embed::Embedder& embedder, double threshold) {
  std::vector<VisualAsset> unplaced;
  if (assets.empty()) return unplaced;

  std::vector<std::string> bodies;
  for (const auto& draft : drafts) bodies.push_back(draft.body_markdown);
  auto body_vecs = embedder.embed_batch(bodies);
  std::vector<std::string> captions;
  for (const auto& asset : assets) captions.push_back(asset.caption);
  auto caption_vecs = embedder.embed_batch(captions);

  for (std::size_t a = 0; a < assets.size(); ++a) {
    int best_section = -1;
    double best_score = 0.0;
    for (std::size_t s = 0; s < drafts.size(); ++s) {
      double score = embed::cosine_similarity(caption_vecs[a], body_vecs[s]);
      if (score > best_score) {
        best_score = score;
        best_section = static_cast<int>(s);
      }
    }
    if (best_section >= 0 && best_score >= threshold)
      drafts[static_cast<std::size_t>(best_section)].visual_markdown.push_back(
          render_asset(assets[a]));
    else
      unplaced.push_back(assets[a]);
  }
  return unplaced;
}

Report assemble_report(const ReportPlan& plan, const std::vector<SectionDraft>& drafts,
                       const std::vector<VisualAsset>& unplaced, const ingest::Corpus& corpus) {
  Report report;
  std::map<std::string, int> global_of_chunk;
  std::vector<std::string> chunk_order;

  std::string md = "# " + plan.title + "\n";
  for (const auto& draft : drafts) {
    md += "\n## " + draft.heading + "\n\n";
    const std::string& body = draft.body_markdown;
    std::string renumbered;
    renumbered.reserve(body.size());
    std::size_t cursor = 0;
    for (const auto& marker : scan_markers(body)) {
      renumbered += body.substr(cursor, marker.pos - cursor);
      cursor = marker.pos + marker.len;
      // Drafts only carry validated local markers at this point.
      const auto& chunk_id =
          draft.context_chunk_ids[static_cast<std::size_t>(marker.value - 1)];
      auto it = global_of_chunk.find(chunk_id);
      if (it == global_of_chunk.end()) {
        it = global_of_chunk.emplace(chunk_id, static_cast<int>(chunk_order.size()) + 1).first;
        chunk_order.push_back(chunk_id);
      }
      renumbered += "[" + std::to_string(it->second) + "]";
    }
    renumbered += body.substr(cursor);
    md += renumbered + "\n";
    for (const auto& visual : draft.visual_markdown) md += "\n" + visual + "\n";
  }

  if (!unplaced.empty()) {
    md += "\n## Unplaced assets\n\n";
    for (const auto& asset : unplaced) md += "- " + asset.chunk_id + ": " + one_line(asset.caption) + "\n";
  }

  md += "\n## References\n";
  if (!chunk_order.empty()) md += "\n";
  for (std::size_t i = 0; i < chunk_order.size(); ++i) {
    const auto& chunk = corpus.at(chunk_order[i]);
    md += "[" + std::to_string(i + 1) + "] " + chunk.doc_id + ", " + chunk.chunk_id + "\n";
    report.bibliography[std::to_string(i + 1)] = chunk.chunk_id;
  }

  report.markdown = std::move(md);
  return report;
}

namespace {

bool heuristic_supported(const std::string& claim, const std::string& evidence) {
  auto claim_tokens = tokenize(claim);
  std::set<std::string> claim_set(claim_tokens.begin(), claim_tokens.end());
  if (claim_set.empty()) return true;
  auto evidence_tokens = tokenize(evidence);
  std::set<std::string> evidence_set(evidence_tokens.begin(), evidence_tokens.end());
  std::size_t overlap = 0;
  for (const auto& token : claim_set)
    if (evidence_set.count(token)) ++overlap;
  // Supported iff overlap covers at least 30% of the claim's distinct tokens.
  return 10 * overlap >= 3 * claim_set.size();
}

std::string strip_markers(const std::string& text) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& marker : scan_markers(text)) {
    out += text.substr(cursor, marker.pos - cursor);
    cursor = marker.pos + marker.len;
  }
  out += text.substr(cursor);
  return trim(out);
}

}  // namespace

Report fact_check(Report report, const ingest::Corpus& corpus, gateway::Gateway* gw) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  const std::string& md = report.markdown;
  while (start <= md.size()) {
    std::size_t end = md.find('\n', start);
    if (end == std::string::npos) {
      lines.push_back(md.substr(start));
      break;
    }
    lines.push_back(md.substr(start, end - start));
    start = end + 1;
  }

  bool in_references = false;
  for (auto& line : lines) {
    if (line == "## References") in_references = true;
    if (in_references || line.empty()) continue;
    char first = line[0];
    if (first == '#' || first == '!' || first == '|' || first == '-' || first == '`') continue;

    // Sentence segments ending at . ! ? plus a trailing remainder.
    std::vector<std::string> segments;
    std::size_t seg_start = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '.' || line[i] == '!' || line[i] == '?') {
        segments.push_back(line.substr(seg_start, i - seg_start + 1));
        seg_start = i + 1;
      }
    }
    if (seg_start < line.size()) segments.push_back(line.substr(seg_start));

    std::string rebuilt;
    for (const auto& segment : segments) {
      rebuilt += segment;
      auto markers = scan_markers(segment);
      if (markers.empty()) continue;

      std::string evidence;
      std::string evidence_chunk;
      for (const auto& marker : markers) {
        auto it = report.bibliography.find(std::to_string(marker.value));
        if (it == report.bibliography.end()) continue;
        if (evidence_chunk.empty()) evidence_chunk = it->second;
        if (!evidence.empty()) evidence += "\n";
        evidence += corpus.at(it->second).text;
      }
      if (evidence_chunk.empty()) continue;  // markers that never made the bibliography

      std::string claim = strip_markers(segment);
      bool supported = false;
      bool decided = false;
      if (gw != nullptr) {
        try {
          auto reply = gw->ask("fact_check", {{"claim", claim}, {"evidence", evidence}}).text;
          auto parsed = nlohmann::json::parse(reply);
          supported = parsed.at("supported").get<bool>();
          decided = true;
        } catch (const Error& e) {
          if (!is_degraded_provider(e)) throw;
          warn(std::string("fact check falling back to token overlap: ") + e.what());
        } catch (const nlohmann::json::exception&) {
          warn("fact check reply malformed, falling back to token overlap");
        }
      }
      if (!decided) supported = heuristic_supported(claim, evidence);

      report.factcheck.push_back(
          FactCheckEntry{claim, supported ? "supported" : "unsupported", evidence_chunk});
      if (!supported) rebuilt += " ⚠unverified";
    }
    line = rebuilt;
  }

  std::string joined;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    joined += lines[i];
    if (i + 1 < lines.size()) joined += "\n";
  }
  report.markdown = std::move(joined);
  return report;
}

Report write_report(const retrieval::StoreContext& ctx, const ingest::Corpus& corpus,
                    const std::string& query, gateway::Gateway& gw, const WriterConfig& config,
                    bool llm_fact_check) {
  auto plan = plan_outline(query, gw, config);
  std::vector<SectionDraft> drafts;
  for (const auto& section : plan.sections) {
    auto context = doc_finder(ctx, corpus, section.section_query, config.doc_finder_k);
    drafts.push_back(draft_section(section, context, gw));
  }
  auto assets = collect_assets(corpus);
  auto unplaced = place_visuals(drafts, assets, *ctx.embedder, config.visual_threshold);
  auto report = assemble_report(plan, drafts, unplaced, corpus);
  return fact_check(std::move(report), corpus, llm_fact_check ? &gw : nullptr);
}

nlohmann::json report_to_json(const Report& report) {
  nlohmann::json bibliography = nlohmann::json::object();
  for (const auto& [marker, chunk_id] : report.bibliography) bibliography[marker] = chunk_id;
  nlohmann::json factcheck = nlohmann::json::array();
  for (const auto& entry : report.factcheck)
    factcheck.push_back({{"claim", entry.claim},
                         {"verdict", entry.verdict},
                         {"evidence_chunk_id", entry.evidence_chunk_id}});
  return nlohmann::json{{"markdown", report.markdown},
                        {"bibliography", std::move(bibliography)},
                        {"factcheck", std::move(factcheck)}};
}

}  // namespace heta::writer
