#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>

#include "edms/container.hpp"
#include "edms/entropy.hpp"
#include "edms/metrics.hpp"
#include "edms/pipeline.hpp"
#include "edms/train.hpp"
#include "edms/weights.hpp"

namespace fs = std::filesystem;
using namespace edms;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitMismatch = 3;

constexpr const char* kCsvHeader =
    "image,variant,q,bpp,psnr_db,ms_ssim,enc_s,dec_s,synth_hash8";

std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string csv_row(const std::string& image, const std::string& variant, int q,
                    const CodecStats& st) {
    std::ostringstream os;
    os << image << "," << variant << "," << q << "," << fmt_double(st.bpp) << ","
       << fmt_double(st.psnr_db) << "," << fmt_double(st.ms_ssim) << ","
       << fmt_double(st.enc_s) << "," << fmt_double(st.dec_s) << ","
       << hex8(st.synth_hash8);
    return os.str();
}

std::vector<uint8_t> read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ContainerError("cannot open: " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, std::span<const uint8_t> bytes) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ContainerError("cannot open for writing: " + tmp.string());
        f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    }
    fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_file_atomic(path, std::span<const uint8_t>(
                                reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

const char* variant_name(bool enhance) {
    return enhance ? "with-enhancement" : "without-enhancement";
}

struct EvalRow {
    std::string image;
    bool enhance = true;
    int q = 1;
    CodecStats stats;
    bool failed = false;
    std::string error;
};

std::vector<fs::path> list_ppm(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<EvalRow> run_eval(const fs::path& data_dir, const WeightSet& w,
                              const std::vector<int>& q_list, const std::vector<bool>& variants,
                              int jobs) {
    const std::vector<fs::path> files = list_ppm(data_dir);
    std::vector<EvalRow> rows;
    for (const auto& f : files) {
        for (int q : q_list) {
            for (bool enhance : variants) {
                rows.push_back({f.filename().string(), enhance, q, {}, false, {}});
            }
        }
    }
    // row order is fixed up front; scheduling cannot reorder results
    auto work = [&](std::size_t i) {
        EvalRow& row = rows[i];
        try {
            const ImageU8 img = read_ppm(data_dir / row.image);
            EncodeOptions opt;
            opt.q = row.q;
            opt.enhance = row.enhance;
            auto [bytes, enc_stats] = encode(img, w, opt);
            auto [decoded, dec_stats] = decode(bytes, w);
            row.stats = enc_stats;
            row.stats.dec_s = dec_stats.dec_s;
            row.stats.psnr_db = psnr(img, decoded);
            row.stats.ms_ssim = ms_ssim_scales_for(img.w, img.h) >= 1
                                    ? ms_ssim(img, decoded)
                                    : std::nan("");
            row.stats.synth_hash8 = dec_stats.synth_hash8;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
    };
    if (jobs <= 1) {
        for (std::size_t i = 0; i < rows.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::future<void>> pool;
        for (int j = 0; j < jobs; ++j) {
            pool.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next++; i < rows.size(); i = next++) work(i);
            }));
        }
        for (auto& f : pool) f.get();
    }
    return rows;
}

std::vector<int> parse_q_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const int q = std::stoi(item);
        if (q < 1 || q > 64) throw CLI::ValidationError("--q-list", "q must be in [1, 64]");
        out.push_back(q);
    }
    if (out.empty()) throw CLI::ValidationError("--q-list", "empty list");
    return out;
}

std::vector<bool> parse_variants(const std::string& text) {
    if (text == "with") return {true};
    if (text == "without") return {false};
    if (text == "both") return {true, false};
    throw CLI::ValidationError("--variants", "expected with|without|both");
}

int run(int argc, char** argv) {
    CLI::App app{"EDMS layered image codec"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Render a synthetic labeled dataset");
    uint64_t gd_seed = 1;
    int gd_count = 16, gd_size = 64, gd_classes = 4;
    std::string gd_out;
    gen->add_option("--seed", gd_seed);
    gen->add_option("--count", gd_count);
    gen->add_option("--size", gd_size);
    gen->add_option("--classes", gd_classes);
    gen->add_option("--out", gd_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "Train one stage (segmenter | base | smapnet)");
    TrainConfig cfg;
    std::string tr_stage, tr_data, tr_win, tr_wout, tr_log;
    tr->add_option("--stage", tr_stage)->required()->check(CLI::IsMember({"segmenter", "base", "smapnet"}));
    tr->add_option("--data", tr_data)->required();
    tr->add_option("--epochs", cfg.epochs);
    tr->add_option("--lr", cfg.lr);
    tr->add_option("--batch", cfg.batch);
    tr->add_option("--seed", cfg.seed);
    tr->add_option("--classes", cfg.classes);
    tr->add_option("--weights-in", tr_win);
    tr->add_option("--weights-out", tr_wout)->required();
    tr->add_option("--log", tr_log, "Loss log CSV (default <weights-out>.loss.csv)");

    // encode / decode / verify
    auto* enc = app.add_subcommand("encode", "Encode a PPM image to an EDMS container");
    std::string e_in, e_weights, e_out;
    int e_q = 1;
    bool e_no_enhance = false, e_hash = false;
    enc->add_option("--input", e_in)->required();
    enc->add_option("--weights", e_weights)->required();
    enc->add_option("--q", e_q);
    enc->add_option("--out", e_out)->required();
    enc->add_flag("--no-enhance", e_no_enhance, "Bypass segment enhancement");
    enc->add_flag("--embed-synth-hash", e_hash, "Embed the synthesis-hash prefix");

    auto* dec = app.add_subcommand("decode", "Decode an EDMS container to a PPM image");
    std::string d_in, d_weights, d_out;
    dec->add_option("--input", d_in)->required();
    dec->add_option("--weights", d_weights)->required();
    dec->add_option("--out", d_out)->required();

    auto* ver = app.add_subcommand("verify", "Verify matched execution of a container");
    std::string v_in, v_weights;
    ver->add_option("--input", v_in)->required();
    ver->add_option("--weights", v_weights)->required();

    // eval / rd-curve
    auto* ev = app.add_subcommand("eval", "Per-image rate-distortion rows over a dataset");
    auto* rd = app.add_subcommand("rd-curve", "Mean rate-distortion points per (q, variant)");
    std::string ev_data, ev_weights, ev_qlist = "1", ev_variants = "with", ev_csv;
    int ev_jobs = 1;
    for (auto* cmd : {ev, rd}) {
        cmd->add_option("--data", ev_data)->required();
        cmd->add_option("--weights", ev_weights)->required();
        cmd->add_option("--q-list", ev_qlist);
        cmd->add_option("--variants", ev_variants);
        cmd->add_option("--csv", ev_csv)->required();
        cmd->add_option("--jobs", ev_jobs);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (gen->parsed()) {
        const Dataset data = gen_dataset(gd_seed, gd_count, gd_size, gd_classes);
        save_dataset(data, gd_out);
        std::cout << "wrote " << data.size() << " sample pairs to " << gd_out << "\n";
        return 0;
    }

    if (tr->parsed()) {
        cfg.stage = tr_stage;
        WeightSet carry;
        if (!tr_win.empty()) carry = load_weights(tr_win);
        if (tr_stage == "smapnet") {
            for (const char* prefix : {"compnet.", "finenet.", "segmenter."}) {
                if (!carry.has_prefix(prefix)) {
                    std::cerr << "error: smapnet stage requires --weights-in with a trained "
                                 "segmenter and base (missing "
                              << prefix << ")\n";
                    return kExitUsage;
                }
            }
        }
        const Dataset data = load_dataset(tr_data);
        TrainResult result;
        if (tr_stage == "segmenter") {
            result = train_segmenter(cfg, data);
            for (const auto& e : carry.entries()) result.weights.put(e);
        } else if (tr_stage == "base") {
            result = train_base(cfg, data, carry);
        } else {
            result = train_smapnet(cfg, data, carry);
        }
        save_weights(result.weights, tr_wout);
        write_loss_log(result.log, tr_log.empty() ? tr_wout + ".loss.csv" : tr_log);
        std::cout << "stage " << tr_stage << ": " << result.log.size() << " epochs, final loss "
                  << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
        return 0;
    }

    if (enc->parsed()) {
        const ImageU8 img = read_ppm(e_in);
        const WeightSet w = load_weights(e_weights);
        EncodeOptions opt;
        opt.q = e_q;
        opt.enhance = !e_no_enhance;
        opt.embed_synth_hash = e_hash;
        auto [bytes, stats] = encode(img, w, opt);
        write_file_atomic(e_out, bytes);
        std::cout << kCsvHeader << "\n"
                  << csv_row(fs::path(e_in).filename().string(), variant_name(opt.enhance),
                             opt.q, stats)
                  << "\n";
        return 0;
    }

    if (dec->parsed()) {
        const std::vector<uint8_t> bytes = read_file(d_in);
        const WeightSet w = load_weights(d_weights);
        const ContainerHeader hdr = parse_container(bytes).header;
        auto [img, stats] = decode(bytes, w);
        write_ppm(img, d_out);
        std::cout << kCsvHeader << "\n"
                  << csv_row(fs::path(d_in).filename().string(), variant_name(!hdr.no_enhance()),
                             hdr.q, stats)
                  << "\n";
        return 0;
    }

    if (ver->parsed()) {
        const std::vector<uint8_t> bytes = read_file(v_in);
        const WeightSet w = load_weights(v_weights);
        const MatchReport r = verify_matched(bytes, w);
        std::cout << "stored=" << hex8(r.stored_hash8) << " recomputed=" << hex8(r.recomputed_hash8)
                  << " header=" << r.header_bytes << " compact=" << r.compact_bytes
                  << " residual=" << r.residual_bytes << " hash=" << r.hash_bytes
                  << " total=" << r.total_bytes << " bpp=" << fmt_double(r.bpp) << " "
                  << (r.match ? "match" : "MISMATCH") << "\n";
        return r.match ? 0 : kExitMismatch;
    }

    // eval | rd-curve
    const WeightSet w = load_weights(ev_weights);
    const std::vector<int> q_list = parse_q_list(ev_qlist);
    const std::vector<bool> variants = parse_variants(ev_variants);
    std::vector<EvalRow> rows = run_eval(ev_data, w, q_list, variants, ev_jobs);

    std::size_t failures = 0;
    for (const auto& r : rows) {
        if (r.failed) {
            ++failures;
            std::cerr << "error: " << r.image << " q=" << r.q << " "
                      << variant_name(r.enhance) << ": " << r.error << "\n";
        }
    }
    std::sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
        return std::tie(a.image, a.q, b.enhance) < std::tie(b.image, b.q, a.enhance);
    });

    std::ostringstream csv;
    csv << kCsvHeader << "\n";
    if (ev->parsed()) {
        for (const auto& r : rows) {
            if (!r.failed) {
                csv << csv_row(r.image, variant_name(r.enhance), r.q, r.stats) << "\n";
            }
        }
    } else {
        // one mean row per (q, variant)
        std::map<std::pair<int, bool>, std::vector<const EvalRow*>> groups;
        for (const auto& r : rows) {
            if (!r.failed) groups[{r.q, !r.enhance}].push_back(&r);
        }
        for (const auto& [key, members] : groups) {
            CodecStats mean;
            for (const EvalRow* r : members) {
                mean.bpp += r->stats.bpp;
                mean.psnr_db += r->stats.psnr_db;
                mean.ms_ssim += r->stats.ms_ssim;
                mean.enc_s += r->stats.enc_s;
                mean.dec_s += r->stats.dec_s;
            }
            const double n = double(members.size());
            mean.bpp /= n;
            mean.psnr_db /= n;
            mean.ms_ssim /= n;
            mean.enc_s /= n;
            mean.dec_s /= n;
            std::ostringstream os;
            os << "mean," << variant_name(!key.second) << "," << key.first << ","
               << fmt_double(mean.bpp) << "," << fmt_double(mean.psnr_db) << ","
               << fmt_double(mean.ms_ssim) << "," << fmt_double(mean.enc_s) << ","
               << fmt_double(mean.dec_s) << ",";
            csv << os.str() << "\n";
        }
    }
    write_text_atomic(ev_csv, csv.str());
    std::cout << "wrote " << ev_csv << " (" << rows.size() - failures << " rows";
    if (failures) std::cout << ", " << failures << " failures";
    std::cout << ")\n";
    return failures == 0 ? 0 : kExitFormat;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const DigestMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const SynthHashMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMismatch;
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    }
}
