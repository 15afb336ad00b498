#include "meshcompose/scene.hpp"

#include "meshcompose/errors.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace meshcompose {

using nlohmann::json;

namespace {

json transform_to_json(const SimilarityTransform& t) {
    const Eigen::Quaterniond q = t.rotation_quat();
    return json{{"scale", t.scale()},
                {"rotation_quat", {q.w(), q.x(), q.y(), q.z()}},
                {"translation", {t.translation().x(), t.translation().y(), t.translation().z()}}};
}

SimilarityTransform transform_from_json(const json& j) {
    const auto& rq = j.at("rotation_quat");
    Eigen::Quaterniond q(rq.at(0).get<double>(), rq.at(1).get<double>(), rq.at(2).get<double>(),
                         rq.at(3).get<double>());
    q.normalize();
    const auto& tr = j.at("translation");
    return SimilarityTransform(
        j.at("scale").get<double>(), q.toRotationMatrix(),
        Eigen::Vector3d(tr.at(0).get<double>(), tr.at(1).get<double>(), tr.at(2).get<double>()));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw FileNotFoundError("cannot write " + path);
    out << text;
}

} // namespace

void SceneSpec::validate() const {
    if (objects.size() < 2) {
        throw InvalidSceneSpecError("scene needs at least 2 objects");
    }
    int hints = 0;
    for (size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].id.empty()) throw InvalidSceneSpecError("object ids must be non-empty");
        for (size_t j = i + 1; j < objects.size(); ++j) {
            if (objects[i].id == objects[j].id) {
                throw InvalidSceneSpecError("duplicate object id '" + objects[i].id + "'");
            }
        }
        if (objects[i].anchor_hint) ++hints;
    }
    if (hints > 1) throw InvalidSceneSpecError("at most one object may carry the anchor hint");
}

SceneSpec load_scene_spec(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw UnsupportedFormatError("bad scene JSON (" + path + "): " + e.what());
    }

    SceneSpec spec;
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    try {
        for (const auto& obj : j.at("objects")) {
            SceneObject o;
            o.id = obj.at("id").get<std::string>();
            o.asset_mesh_path = resolve(obj.at("asset").get<std::string>());
            o.guidance_mesh_path = resolve(obj.at("guidance").get<std::string>());
            o.anchor_hint = obj.value("anchor_hint", false);
            spec.objects.push_back(std::move(o));
        }
        if (j.contains("params")) {
            const auto& p = j["params"];
            spec.params.seed = p.value("seed", spec.params.seed);
            spec.params.sample_n = p.value("sample_n", spec.params.sample_n);
            spec.params.sdf_resolution = p.value("sdf_resolution", spec.params.sdf_resolution);
            spec.params.sdf_padding = p.value("sdf_padding", spec.params.sdf_padding);
            spec.params.registrar = p.value("registrar", spec.params.registrar);
            spec.params.strict = p.value("strict", spec.params.strict);
            spec.params.metrics_n = p.value("metrics_n", spec.params.metrics_n);
            if (p.contains("icp")) {
                const auto& icp = p["icp"];
                spec.params.icp.max_iterations =
                    icp.value("max_iterations", spec.params.icp.max_iterations);
                spec.params.icp.convergence_tol =
                    icp.value("convergence_tol", spec.params.icp.convergence_tol);
                spec.params.icp.trim_fraction =
                    icp.value("trim_fraction", spec.params.icp.trim_fraction);
                if (icp.contains("correspondence_max_dist") &&
                    !icp["correspondence_max_dist"].is_null()) {
                    spec.params.icp.correspondence_max_dist =
                        icp["correspondence_max_dist"].get<double>();
                }
            }
            if (p.contains("collision")) {
                const auto& col = p["collision"];
                auto& c = spec.params.collision;
                c.epsilon = col.value("epsilon", c.epsilon);
                c.lambda = col.value("lambda", c.lambda);
                c.beta_max = col.value("beta_max", c.beta_max);
                c.k_max = col.value("k_max", c.k_max);
                c.inner_steps = col.value("inner_steps", c.inner_steps);
                c.initial_step = col.value("initial_step", c.initial_step);
                c.objective_tol = col.value("objective_tol", c.objective_tol);
            }
        }
        if (j.contains("refinement")) {
            const auto& r = j["refinement"];
            spec.refinement.enabled = r.value("enabled", false);
            spec.refinement.max_iterations =
                r.value("max_iterations", spec.refinement.max_iterations);
            if (r.contains("trigger_threshold") && !r["trigger_threshold"].is_null()) {
                spec.refinement.trigger_threshold = r["trigger_threshold"].get<double>();
            }
            spec.refinement.editor = r.value("editor", spec.refinement.editor);
        }
    } catch (const json::exception& e) {
        throw UnsupportedFormatError("bad scene JSON (" + path + "): " + e.what());
    }
    spec.validate();
    return spec;
}

void save_scene_spec(const SceneSpec& spec, const std::string& path) {
    json objects = json::array();
    for (const auto& o : spec.objects) {
        json jo{{"id", o.id}, {"asset", o.asset_mesh_path}, {"guidance", o.guidance_mesh_path}};
        if (o.anchor_hint) jo["anchor_hint"] = true;
        objects.push_back(jo);
    }
    const auto& p = spec.params;
    json params{{"seed", p.seed},
                {"sample_n", p.sample_n},
                {"sdf_resolution", p.sdf_resolution},
                {"sdf_padding", p.sdf_padding},
                {"registrar", p.registrar},
                {"strict", p.strict},
                {"metrics_n", p.metrics_n},
                {"icp",
                 {{"max_iterations", p.icp.max_iterations},
                  {"convergence_tol", p.icp.convergence_tol},
                  {"trim_fraction", p.icp.trim_fraction},
                  {"correspondence_max_dist",
                   p.icp.correspondence_max_dist ? json(*p.icp.correspondence_max_dist)
                                                 : json(nullptr)}}},
                {"collision",
                 {{"epsilon", p.collision.epsilon},
                  {"lambda", p.collision.lambda},
                  {"beta_max", p.collision.beta_max},
                  {"k_max", p.collision.k_max},
                  {"inner_steps", p.collision.inner_steps},
                  {"initial_step", p.collision.initial_step},
                  {"objective_tol", p.collision.objective_tol}}}};
    json refinement{{"enabled", spec.refinement.enabled},
                    {"max_iterations", spec.refinement.max_iterations},
                    {"trigger_threshold", spec.refinement.trigger_threshold
                                              ? json(*spec.refinement.trigger_threshold)
                                              : json(nullptr)},
                    {"editor", spec.refinement.editor}};
    const json root{{"objects", objects}, {"params", params}, {"refinement", refinement}};
    write_text_file(path, root.dump(2) + "\n");
}

const ObjectResult* ComposedScene::find(const std::string& id) const {
    for (const auto& o : objects) {
        if (o.id == id) return &o;
    }
    return nullptr;
}

std::string composed_scene_to_json(const ComposedScene& scene) {
    json objects = json::array();
    for (const auto& o : scene.objects) {
        json jo{{"id", o.id},
                {"asset", o.asset_mesh_path},
                {"is_anchor", o.is_anchor},
                {"failed", o.failed},
                {"transform", transform_to_json(o.transform)},
                {"registration",
                 {{"obb_scale", o.obb_scale},
                  {"coarse_inliers", o.coarse_inliers},
                  {"coarse_inlier_ratio", o.coarse_inlier_ratio},
                  {"icp_rmse", o.icp_rmse},
                  {"icp_iterations", o.icp_iterations},
                  {"icp_converged", o.icp_converged}}}};
        if (!o.failure.empty()) jo["failure"] = o.failure;
        if (o.optimization) {
            json stages = json::array();
            for (const auto& s : o.optimization->stages) {
                stages.push_back(json{{"k", s.k},
                                      {"beta", s.beta},
                                      {"align_term", s.align_term},
                                      {"col_term", s.collision_term},
                                      {"total", s.total},
                                      {"max_penetration", s.max_penetration}});
            }
            jo["optimization"] = json{{"converged", o.optimization->converged},
                                      {"final_transform",
                                       transform_to_json(o.optimization->final_transform)},
                                      {"stages", stages}};
        } else {
            jo["optimization"] = nullptr;
        }
        objects.push_back(jo);
    }

    json pairwise = json::array();
    for (const auto& pr : scene.pairwise) {
        pairwise.push_back(json{{"a", pr.a},
                                {"b", pr.b},
                                {"r_surface", pr.report.r_surface},
                                {"r_volume", pr.report.r_volume},
                                {"n_samples", pr.report.n_samples},
                                {"seed", pr.report.seed},
                                {"intersecting_faces_a", pr.report.intersecting_face_counts.first},
                                {"intersecting_faces_b", pr.report.intersecting_face_counts.second},
                                {"max_penetration_depth", pr.report.max_penetration_depth}});
    }

    const json root{{"anchor", scene.anchor_id},
                    {"epsilon_used", scene.epsilon_used},
                    {"objects", objects},
                    {"pairwise", pairwise},
                    {"warnings", scene.warnings}};
    return root.dump(2) + "\n";
}

ComposedScene composed_scene_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw UnsupportedFormatError(std::string("bad composed-scene JSON: ") + e.what());
    }

    ComposedScene scene;
    try {
        scene.anchor_id = j.at("anchor").get<std::string>();
        scene.epsilon_used = j.value("epsilon_used", 0.0);
        for (const auto& jo : j.at("objects")) {
            ObjectResult o;
            o.id = jo.at("id").get<std::string>();
            o.asset_mesh_path = jo.at("asset").get<std::string>();
            o.is_anchor = jo.value("is_anchor", false);
            o.failed = jo.value("failed", false);
            o.failure = jo.value("failure", std::string());
            o.transform = transform_from_json(jo.at("transform"));
            if (jo.contains("registration")) {
                const auto& reg = jo["registration"];
                o.obb_scale = reg.value("obb_scale", 1.0);
                o.coarse_inliers = reg.value("coarse_inliers", 0);
                o.coarse_inlier_ratio = reg.value("coarse_inlier_ratio", 0.0);
                o.icp_rmse = reg.value("icp_rmse", 0.0);
                o.icp_iterations = reg.value("icp_iterations", 0);
                o.icp_converged = reg.value("icp_converged", false);
            }
            if (jo.contains("optimization") && !jo["optimization"].is_null()) {
                OptimizationTrace trace;
                const auto& opt = jo["optimization"];
                trace.converged = opt.value("converged", false);
                trace.final_transform = transform_from_json(opt.at("final_transform"));
                for (const auto& js : opt.at("stages")) {
                    StageRecord s;
                    s.k = js.at("k").get<int>();
                    s.beta = js.at("beta").get<double>();
                    s.align_term = js.at("align_term").get<double>();
                    s.collision_term = js.at("col_term").get<double>();
                    s.total = js.at("total").get<double>();
                    s.max_penetration = js.at("max_penetration").get<double>();
                    trace.stages.push_back(s);
                }
                o.optimization = std::move(trace);
            }
            scene.objects.push_back(std::move(o));
        }
        for (const auto& jp : j.value("pairwise", json::array())) {
            PairReport pr;
            pr.a = jp.at("a").get<std::string>();
            pr.b = jp.at("b").get<std::string>();
            pr.report.r_surface = jp.at("r_surface").get<double>();
            pr.report.r_volume = jp.at("r_volume").get<double>();
            pr.report.n_samples = jp.at("n_samples").get<std::uint64_t>();
            pr.report.seed = jp.at("seed").get<std::uint64_t>();
            pr.report.intersecting_face_counts = {jp.value("intersecting_faces_a", 0),
                                                  jp.value("intersecting_faces_b", 0)};
            pr.report.max_penetration_depth = jp.at("max_penetration_depth").get<double>();
            scene.pairwise.push_back(std::move(pr));
        }
        for (const auto& w : j.value("warnings", json::array())) {
            scene.warnings.push_back(w.get<std::string>());
        }
    } catch (const json::exception& e) {
        throw UnsupportedFormatError(std::string("bad composed-scene JSON: ") + e.what());
    }
    return scene;
}

void save_composed_scene(const ComposedScene& scene, const std::string& path) {
    write_text_file(path, composed_scene_to_json(scene));
}

ComposedScene load_composed_scene(const std::string& path) {
    return composed_scene_from_json(read_text_file(path));
}

void export_scene_obj(const ComposedScene& scene, const std::string& path) {
    std::vector<std::pair<std::string, TriangleMesh>> groups;
    for (const auto& o : scene.objects) {
        if (o.failed) continue;
        groups.emplace_back(o.id, transform_mesh(load_mesh(o.asset_mesh_path), o.transform));
    }
    save_obj_groups(groups, path);
}

} // namespace meshcompose
